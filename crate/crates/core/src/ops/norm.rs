use alloc::vec;
use alloc::vec::Vec;

use super::{check_upstream, Backward};
use crate::error::{shape_err, Result};
use crate::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormConfig {
    /// Weight of the old running statistic in the update.
    pub momentum: f64,
    pub eps: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self { momentum: 0.9, eps: 1e-5 }
    }
}

/// Non-trainable per-channel statistics used in evaluation mode.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Tensor,
    pub var: Tensor,
}

impl RunningStats {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(Self { mean: Tensor::zeros(&[channels])?, var: Tensor::ones(&[channels])? })
    }
}

/// Statistics are per channel (last axis) over all other axes. Training
/// mode returns the momentum-updated running statistics; evaluation mode
/// returns them unchanged.
pub fn batch_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, running: &RunningStats, training: bool, config: NormConfig) -> Result<(Tensor, RunningStats)> {
    BatchNorm::forward(x, gamma, beta, running, training, config).map(|(y, ctx)| (y, ctx.updated))
}

pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// Recorded [`batch_norm`] call.
pub struct BatchNorm {
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
    gamma: Vec<f64>,
    shape: Vec<usize>,
    training: bool,
    updated: RunningStats,
}

impl BatchNorm {
    pub fn forward(x: &Tensor, gamma: &Tensor, beta: &Tensor, running: &RunningStats, training: bool, config: NormConfig) -> Result<(Tensor, Self)> {
        let c = *x.shape().last().unwrap_or(&0);
        for (name, t) in [("gamma", gamma), ("beta", beta), ("running mean", &running.mean), ("running var", &running.var)] {
            if t.shape() != [c] {
                return Err(shape_err!("batch norm {name} {:?} does not match {c} channels", t.shape()));
            }
        }
        let count = x.len() / c;
        let xd = x.data();

        let (mean, var) = if training {
            let mut mean = vec![0.0; c];
            for px in xd.chunks_exact(c) {
                for (m, &v) in mean.iter_mut().zip(px) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            let mut var = vec![0.0; c];
            for px in xd.chunks_exact(c) {
                for ((s, &v), &m) in var.iter_mut().zip(px).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= count as f64);
            (mean, var)
        } else {
            (running.mean.data().to_vec(), running.var.data().to_vec())
        };

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + config.eps)).collect();
        let (g, b) = (gamma.data(), beta.data());
        let mut normalized = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for ((px, np), op) in xd.chunks_exact(c).zip(normalized.chunks_exact_mut(c)).zip(out.chunks_exact_mut(c)) {
            for j in 0..c {
                np[j] = (px[j] - mean[j]) * inv_std[j];
                op[j] = g[j] * np[j] + b[j];
            }
        }

        let updated = if training {
            let blend = |old: &Tensor, new: &[f64]| {
                let data = old.data().iter().zip(new).map(|(o, n)| config.momentum * o + (1.0 - config.momentum) * n).collect();
                Tensor::from_parts(vec![c], data)
            };
            RunningStats { mean: blend(&running.mean, &mean), var: blend(&running.var, &var) }
        } else {
            running.clone()
        };

        let ctx = Self { normalized, inv_std, gamma: g.to_vec(), shape: x.shape().to_vec(), training, updated };
        Ok((Tensor::from_parts(x.shape().to_vec(), out), ctx))
    }

    /// Running statistics after this call.
    pub fn updated_stats(&self) -> &RunningStats {
        &self.updated
    }
}

impl Backward for BatchNorm {
    type Grads = BatchNormGrads;

    fn backward(self, upstream: &Tensor) -> Result<BatchNormGrads> {
        check_upstream(&self.shape, upstream, "batch_norm")?;
        let c = self.gamma.len();
        let count = (upstream.len() / c) as f64;
        let ud = upstream.data();
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for (u, n) in ud.chunks_exact(c).zip(self.normalized.chunks_exact(c)) {
            for j in 0..c {
                dgamma[j] += u[j] * n[j];
                dbeta[j] += u[j];
            }
        }
        let mut dx = vec![0.0; ud.len()];
        for ((u, n), d) in ud.chunks_exact(c).zip(self.normalized.chunks_exact(c)).zip(dx.chunks_exact_mut(c)) {
            for j in 0..c {
                let scale = self.gamma[j] * self.inv_std[j];
                d[j] = if self.training {
                    // sum(dy) = dbeta and sum(dy * xhat) = dgamma
                    scale * (u[j] - dbeta[j] / count - n[j] * dgamma[j] / count)
                } else {
                    scale * u[j]
                };
            }
        }
        Ok(BatchNormGrads { input: Tensor::from_parts(self.shape, dx), gamma: Tensor::from_parts(vec![c], dgamma), beta: Tensor::from_parts(vec![c], dbeta) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;

    fn channel_moments(y: &Tensor, c: usize) -> Vec<(f64, f64)> {
        (0..c)
            .map(|j| {
                let vals: Vec<f64> = y.data().iter().skip(j).step_by(c).copied().collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
                (m, v)
            })
            .collect()
    }

    #[test]
    fn standardized_input_passes_through() {
        // two samples per channel at +-1: mean 0, variance 1
        let x = Tensor::new(&[2, 1, 1, 2], vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let stats = RunningStats::new(2).unwrap();
        let (y, _) = batch_norm(&x, &Tensor::ones(&[2]).unwrap(), &Tensor::zeros(&[2]).unwrap(), &stats, true, NormConfig::default()).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() <= 1e-5);
        }
    }

    #[test]
    fn zero_gamma_gives_beta() {
        let mut rng = Rng::new(1);
        let x = Tensor::uniform(&mut rng, &[4, 3, 2], -1.0, 1.0).unwrap();
        let beta = Tensor::new(&[2], vec![0.5, -2.0]).unwrap();
        let (y, _) = batch_norm(&x, &Tensor::zeros(&[2]).unwrap(), &beta, &RunningStats::new(2).unwrap(), true, NormConfig::default()).unwrap();
        for px in y.data().chunks(2) {
            assert_eq!(px, beta.data());
        }
    }

    #[test]
    fn training_output_is_standardized() {
        let mut rng = Rng::new(2);
        let x = Tensor::uniform(&mut rng, &[8, 10, 1, 3], -3.0, 5.0).unwrap();
        let (y, _) =
            batch_norm(&x, &Tensor::ones(&[3]).unwrap(), &Tensor::zeros(&[3]).unwrap(), &RunningStats::new(3).unwrap(), true, NormConfig::default()).unwrap();
        for (m, v) in channel_moments(&y, 3) {
            assert!(m.abs() <= 1e-7, "mean {m}");
            assert!((v - 1.0).abs() <= 1e-5, "var {v}");
        }
    }

    #[test]
    fn zero_variance_channel_is_finite() {
        let x = Tensor::full(&[5, 1], 3.0).unwrap();
        let (y, _) =
            batch_norm(&x, &Tensor::ones(&[1]).unwrap(), &Tensor::zeros(&[1]).unwrap(), &RunningStats::new(1).unwrap(), true, NormConfig::default()).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn running_stats_update_and_eval() {
        let x = Tensor::new(&[2, 1], vec![2.0, 4.0]).unwrap();
        let cfg = NormConfig::default();
        let (_, stats) = batch_norm(&x, &Tensor::ones(&[1]).unwrap(), &Tensor::zeros(&[1]).unwrap(), &RunningStats::new(1).unwrap(), true, cfg).unwrap();
        assert!((stats.mean.data()[0] - 0.3).abs() < 1e-12);
        assert!((stats.var.data()[0] - (0.9 + 0.1 * 1.0)).abs() < 1e-12);
        let (y, same) = batch_norm(&x, &Tensor::ones(&[1]).unwrap(), &Tensor::zeros(&[1]).unwrap(), &stats, false, cfg).unwrap();
        assert_eq!(same, stats);
        assert!((y.data()[0] - (2.0 - 0.3) / libm::sqrt(1.0 + 1e-5)).abs() < 1e-12);
    }
}
