use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::ModelConfig;
use crate::error::{shape_err, Result};
use crate::ops::{glorot_uniform, RunningStats};
use crate::{Rng, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running: RunningStats,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(Self { gamma: Tensor::ones(&[channels])?, beta: Tensor::zeros(&[channels])?, running: RunningStats::new(channels)? })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchParams {
    /// `[atrous_kernel, 1, f2, f2]`, no bias.
    pub w: Tensor,
    pub bn: BatchNormParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeParams {
    /// `[f2, f2 / r]`
    pub w1: Tensor,
    pub b1: Tensor,
    /// `[f2 / r, f2]`
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Every tensor of the network. Running batch-norm statistics are stored
/// alongside the trainable tensors but are not trainable.
///
/// The same type carries gradients; there the running statistics are
/// zero and ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `cv.conv1.w`, `[temporal_kernel, 1, 1, f1]`
    pub temporal: Tensor,
    pub bn1: BatchNormParams,
    /// `cv.pw.w`, `[1, 1, f1, f2]`
    pub pointwise: Tensor,
    pub bn2: BatchNormParams,
    /// `cv.dw.w`, `[1, channels, f2, 1]`
    pub depthwise: Tensor,
    pub bn3: BatchNormParams,
    /// Empty when the atrous block is disabled.
    pub branches: Vec<BranchParams>,
    /// `sp.fuse.w`, `[1, 1, fuse_inputs, fuse_width]`
    pub fuse_w: Tensor,
    pub fuse_b: Tensor,
    pub fuse_bn: BatchNormParams,
    /// Present only with attention enabled. Shared by all windows.
    pub se: Option<SeParams>,
    /// `head.dense.w`, `[f2, n_classes]`; shared by all windows.
    pub dense_w: Tensor,
    pub dense_b: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    RunningStat,
}

fn visit_bn<'a>(out: &mut Vec<(String, &'a Tensor, ParamKind)>, prefix: &str, bn: &'a BatchNormParams) {
    out.push((format!("{prefix}.gamma"), &bn.gamma, ParamKind::Trainable));
    out.push((format!("{prefix}.beta"), &bn.beta, ParamKind::Trainable));
    out.push((format!("{prefix}.moving_mean"), &bn.running.mean, ParamKind::RunningStat));
    out.push((format!("{prefix}.moving_var"), &bn.running.var, ParamKind::RunningStat));
}

fn visit_bn_mut<'a>(out: &mut Vec<(String, &'a mut Tensor, ParamKind)>, prefix: &str, bn: &'a mut BatchNormParams) {
    out.push((format!("{prefix}.gamma"), &mut bn.gamma, ParamKind::Trainable));
    out.push((format!("{prefix}.beta"), &mut bn.beta, ParamKind::Trainable));
    out.push((format!("{prefix}.moving_mean"), &mut bn.running.mean, ParamKind::RunningStat));
    out.push((format!("{prefix}.moving_var"), &mut bn.running.var, ParamKind::RunningStat));
}

macro_rules! visit_all {
    ($self:ident, $out:ident, $bn:ident, $($r:tt)*) => {{
        $out.push(("cv.conv1.w".into(), $($r)* $self.temporal, ParamKind::Trainable));
        $bn(&mut $out, "cv.bn1", $($r)* $self.bn1);
        $out.push(("cv.pw.w".into(), $($r)* $self.pointwise, ParamKind::Trainable));
        $bn(&mut $out, "cv.bn2", $($r)* $self.bn2);
        $out.push(("cv.dw.w".into(), $($r)* $self.depthwise, ParamKind::Trainable));
        $bn(&mut $out, "cv.bn3", $($r)* $self.bn3);
        for (i, b) in ($($r)* $self.branches).iter_mut_or_ref().enumerate() {
            $out.push((format!("sp.branch{}.w", i + 1), $($r)* b.w, ParamKind::Trainable));
            $bn(&mut $out, &format!("sp.branch{}.bn", i + 1), $($r)* b.bn);
        }
        $out.push(("sp.fuse.w".into(), $($r)* $self.fuse_w, ParamKind::Trainable));
        $out.push(("sp.fuse.b".into(), $($r)* $self.fuse_b, ParamKind::Trainable));
        $bn(&mut $out, "sp.fuse.bn", $($r)* $self.fuse_bn);
        if let Some(se) = $($r)* $self.se {
            $out.push(("head.se.w1".into(), $($r)* se.w1, ParamKind::Trainable));
            $out.push(("head.se.b1".into(), $($r)* se.b1, ParamKind::Trainable));
            $out.push(("head.se.w2".into(), $($r)* se.w2, ParamKind::Trainable));
            $out.push(("head.se.b2".into(), $($r)* se.b2, ParamKind::Trainable));
        }
        $out.push(("head.dense.w".into(), $($r)* $self.dense_w, ParamKind::Trainable));
        $out.push(("head.dense.b".into(), $($r)* $self.dense_b, ParamKind::Trainable));
    }};
}

trait IterMutOrRef<'a, T: 'a> {
    type Iter: Iterator;
    fn iter_mut_or_ref(self) -> Self::Iter;
}

impl<'a, T: 'a> IterMutOrRef<'a, T> for &'a Vec<T> {
    type Iter = core::slice::Iter<'a, T>;
    fn iter_mut_or_ref(self) -> Self::Iter {
        self.iter()
    }
}

impl<'a, T: 'a> IterMutOrRef<'a, T> for &'a mut Vec<T> {
    type Iter = core::slice::IterMut<'a, T>;
    fn iter_mut_or_ref(self) -> Self::Iter {
        self.iter_mut()
    }
}

impl ModelParams {
    /// Glorot-uniform kernels (depthwise included), zero biases, unit
    /// gammas and zero betas. Draws come from `rng` in the order of
    /// [`ModelParams::named`].
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (f1, f2, c) = (config.f1, config.f2, config.channels);
        let temporal = glorot_uniform(rng, &[config.temporal_kernel, 1, 1, f1])?;
        let pointwise = glorot_uniform(rng, &[1, 1, f1, f2])?;
        let depthwise = glorot_uniform(rng, &[1, c, f2, 1])?;
        let branches = if config.enable_sp {
            config
                .dilations
                .iter()
                .map(|_| Ok(BranchParams { w: glorot_uniform(rng, &[config.atrous_kernel, 1, f2, f2])?, bn: BatchNormParams::new(f2)? }))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let fuse_w = glorot_uniform(rng, &[1, 1, config.fuse_inputs(), config.fuse_width])?;
        let se = if config.enable_at {
            let h = config.se_hidden();
            Some(SeParams { w1: glorot_uniform(rng, &[f2, h])?, b1: Tensor::zeros(&[h])?, w2: glorot_uniform(rng, &[h, f2])?, b2: Tensor::zeros(&[f2])? })
        } else {
            None
        };
        let dense_w = glorot_uniform(rng, &[f2, config.n_classes])?;
        Ok(Self {
            temporal,
            bn1: BatchNormParams::new(f1)?,
            pointwise,
            bn2: BatchNormParams::new(f2)?,
            depthwise,
            bn3: BatchNormParams::new(f2)?,
            branches,
            fuse_w,
            fuse_b: Tensor::zeros(&[config.fuse_width])?,
            fuse_bn: BatchNormParams::new(config.fuse_width)?,
            se,
            dense_w,
            dense_b: Tensor::zeros(&[config.n_classes])?,
        })
    }

    /// Every tensor with its dotted path, in a fixed canonical order.
    pub fn named(&self) -> Vec<(String, &Tensor, ParamKind)> {
        let mut out = Vec::new();
        visit_all!(self, out, visit_bn, &);
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor, ParamKind)> {
        let mut out = Vec::new();
        visit_all!(self, out, visit_bn_mut, &mut);
        out
    }

    pub fn trainable(&self) -> Vec<&Tensor> {
        self.named().into_iter().filter(|p| p.2 == ParamKind::Trainable).map(|p| p.1).collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        self.named_mut().into_iter().filter(|p| p.2 == ParamKind::Trainable).map(|p| p.1).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.named().into_iter().find(|p| p.0 == name).map(|p| p.1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.named_mut().into_iter().find(|p| p.0 == name).map(|p| p.1)
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Number of running-statistic scalars.
    pub fn running_count(&self) -> usize {
        self.named().iter().filter(|p| p.2 == ParamKind::RunningStat).map(|p| p.1.len()).sum()
    }

    /// Same structure with every tensor zeroed.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t, _) in z.named_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    pub(crate) fn batch_norms_mut(&mut self) -> Vec<&mut BatchNormParams> {
        let mut out = alloc::vec![&mut self.bn1, &mut self.bn2, &mut self.bn3];
        out.extend(self.branches.iter_mut().map(|b| &mut b.bn));
        out.push(&mut self.fuse_bn);
        out
    }

    /// Replaces the tensor at `name`, requiring the same shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self.get_mut(name).ok_or_else(|| shape_err!("unknown parameter {name}"))?;
        if slot.shape() != value.shape() {
            return Err(shape_err!("parameter {name} expects {:?}, got {:?}", slot.shape(), value.shape()));
        }
        *slot = value;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_params() {
        let c = ModelConfig::default();
        let a = ModelParams::init(&c, &mut Rng::new(5)).unwrap();
        let b = ModelParams::init(&c, &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
        let d = ModelParams::init(&c, &mut Rng::new(6)).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn names_are_unique_and_complete() {
        let p = ModelParams::init(&ModelConfig::default(), &mut Rng::new(1)).unwrap();
        let names: Vec<String> = p.named().into_iter().map(|n| n.0).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        for n in ["cv.conv1.w", "cv.bn1.gamma", "sp.branch3.w", "sp.fuse.b", "head.se.w2", "head.dense.b"] {
            assert!(names.iter().any(|x| x == n), "{n}");
        }
        assert_eq!(p.get("sp.fuse.w").unwrap().shape(), &[1, 1, 420, 32]);
    }

    #[test]
    fn default_count_in_expected_range() {
        let p = ModelParams::init(&ModelConfig::default(), &mut Rng::new(1)).unwrap();
        let n = p.trainable_count();
        assert!((20_000..=37_000).contains(&n), "{n}");
    }

    #[test]
    fn ablation_drops_tensors() {
        let c = ModelConfig { enable_sp: false, enable_at: false, ..ModelConfig::default() };
        let p = ModelParams::init(&c, &mut Rng::new(1)).unwrap();
        assert!(p.branches.is_empty());
        assert!(p.se.is_none());
        assert_eq!(p.fuse_w.shape(), &[1, 1, 140, 32]);
    }

    #[test]
    fn set_checks_shape() {
        let mut p = ModelParams::init(&ModelConfig::gradcheck(), &mut Rng::new(1)).unwrap();
        assert!(p.set("head.dense.b", Tensor::zeros(&[3]).unwrap()).is_err());
        assert!(p.set("nope", Tensor::zeros(&[2]).unwrap()).is_err());
        p.set("head.dense.b", Tensor::ones(&[2]).unwrap()).unwrap();
        assert_eq!(p.dense_b.data(), &[1.0, 1.0]);
    }
}
