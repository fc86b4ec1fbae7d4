use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config_err, Result};
use crate::ops::NormConfig;

/// Architecture hyperparameters.
///
/// Field names follow the layer they size: `f1` temporal filters, `depth`
/// the expansion factor so that `f2 == depth * f1`, `temporal_kernel` the
/// first convolution length, `pool1` the first pooling length,
/// `dilations` one atrous branch per rate, `fuse_width` the channel count
/// after the fusion 1x1 convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub channels: usize,
    pub samples: usize,
    pub n_classes: usize,
    pub f1: usize,
    pub depth: usize,
    pub f2: usize,
    pub temporal_kernel: usize,
    pub pool1: usize,
    pub dilations: Vec<usize>,
    pub atrous_kernel: usize,
    pub fuse_width: usize,
    pub n_windows: usize,
    pub se_reduction: usize,
    pub dropout: f64,
    pub elu_alpha: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// Multi-branch atrous block.
    pub enable_sp: bool,
    /// Sliding windows; when off a single window spans the whole sequence.
    pub enable_sw: bool,
    /// Squeeze-and-excitation attention inside each window.
    pub enable_at: bool,
}

impl Default for ModelConfig {
    /// The four-class, 22-electrode, 1125-sample configuration.
    fn default() -> Self {
        Self {
            channels: 22,
            samples: 1125,
            n_classes: 4,
            f1: 8,
            depth: 2,
            f2: 16,
            temporal_kernel: 64,
            pool1: 8,
            dilations: vec![2, 4, 6],
            atrous_kernel: 8,
            fuse_width: 32,
            n_windows: 6,
            se_reduction: 4,
            dropout: 0.25,
            elu_alpha: 1.0,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
            enable_sp: true,
            enable_sw: true,
            enable_at: true,
        }
    }
}

impl ModelConfig {
    /// Scaled-down network for short CPU runs: 4 temporal filters, 16-tap
    /// temporal kernel, 4-tap atrous kernels, 8 fused channels, 3 windows.
    pub fn tiny(channels: usize, samples: usize, n_classes: usize) -> Self {
        Self {
            channels,
            samples,
            n_classes,
            f1: 4,
            depth: 2,
            f2: 8,
            temporal_kernel: 16,
            atrous_kernel: 4,
            fuse_width: 8,
            n_windows: 3,
            se_reduction: 2,
            ..Self::default()
        }
    }

    /// Smallest configuration exercising every layer, used for whole-model
    /// gradient checks.
    pub fn gradcheck() -> Self {
        Self { f1: 2, f2: 4, temporal_kernel: 8, pool1: 4, n_windows: 2, ..Self::tiny(3, 64, 2) }
    }

    pub fn norm(&self) -> NormConfig {
        NormConfig { momentum: self.bn_momentum, eps: self.bn_eps }
    }

    /// Sequence length after the first pooling.
    pub fn pooled_len(&self) -> usize {
        self.samples / self.pool1
    }

    /// Input channels of the fusion 1x1 convolution.
    pub fn fuse_inputs(&self) -> usize {
        if self.enable_sp {
            self.dilations.len() * self.pooled_len()
        } else {
            self.pooled_len()
        }
    }

    pub fn effective_windows(&self) -> usize {
        if self.enable_sw {
            self.n_windows
        } else {
            1
        }
    }

    pub fn window_len(&self) -> usize {
        self.fuse_width - self.effective_windows() + 1
    }

    pub fn se_hidden(&self) -> usize {
        self.f2 / self.se_reduction
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("channels", self.channels),
            ("samples", self.samples),
            ("n_classes", self.n_classes),
            ("f1", self.f1),
            ("depth", self.depth),
            ("temporal_kernel", self.temporal_kernel),
            ("pool1", self.pool1),
            ("atrous_kernel", self.atrous_kernel),
            ("fuse_width", self.fuse_width),
            ("se_reduction", self.se_reduction),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(config_err!("{name} must be at least 1"));
            }
        }
        if self.f2 != self.depth * self.f1 {
            return Err(config_err!("f2 ({}) must equal depth * f1 ({})", self.f2, self.depth * self.f1));
        }
        if self.pooled_len() == 0 {
            return Err(config_err!("samples ({}) shorter than pool1 ({})", self.samples, self.pool1));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(config_err!("dilations must be non-empty and at least 1, got {:?}", self.dilations));
        }
        if self.n_windows == 0 || self.n_windows > self.fuse_width {
            return Err(config_err!("n_windows ({}) must be in 1..={}", self.n_windows, self.fuse_width));
        }
        if !self.f2.is_multiple_of(self.se_reduction) {
            return Err(config_err!("se_reduction ({}) must divide f2 ({})", self.se_reduction, self.f2));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.elu_alpha > 0.0) {
            return Err(config_err!("elu_alpha must be positive"));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) || !(self.bn_eps > 0.0) {
            return Err(config_err!("bn_momentum must be in [0, 1) and bn_eps positive"));
        }
        if self.n_classes < 2 {
            return Err(config_err!("n_classes must be at least 2"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny(4, 128, 4).validate().unwrap();
        ModelConfig::gradcheck().validate().unwrap();
    }

    #[test]
    fn default_geometry() {
        let c = ModelConfig::default();
        assert_eq!(c.pooled_len(), 140);
        assert_eq!(c.fuse_inputs(), 420);
        assert_eq!(c.window_len(), 27);
        assert_eq!(c.se_hidden(), 4);
    }

    #[test]
    fn invariant_violations() {
        let bad = [
            ModelConfig { f2: 15, ..ModelConfig::default() },
            ModelConfig { dilations: vec![], ..ModelConfig::default() },
            ModelConfig { dilations: vec![2, 0], ..ModelConfig::default() },
            ModelConfig { n_windows: 33, ..ModelConfig::default() },
            ModelConfig { n_windows: 0, ..ModelConfig::default() },
            ModelConfig { se_reduction: 3, ..ModelConfig::default() },
            ModelConfig { temporal_kernel: 0, ..ModelConfig::default() },
            ModelConfig { pool1: 0, ..ModelConfig::default() },
            ModelConfig { samples: 4, ..ModelConfig::default() },
            ModelConfig { dropout: 1.0, ..ModelConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn ablation_geometry() {
        let c = ModelConfig { enable_sp: false, enable_sw: false, ..ModelConfig::default() };
        assert_eq!(c.fuse_inputs(), 140);
        assert_eq!(c.effective_windows(), 1);
        assert_eq!(c.window_len(), 32);
    }
}
