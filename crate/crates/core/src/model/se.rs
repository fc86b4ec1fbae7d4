use alloc::vec;
use alloc::vec::Vec;

use super::SeParams;
use crate::error::{shape_err, Result};
use crate::ops::{check_upstream, Backward, Dense, Relu, Sigmoid};
use crate::Tensor;

/// `[rows, channels]` or `[batch, rows, channels]` as (batch, rows, channels).
fn split_dims(shape: &[usize]) -> Result<(usize, usize, usize, bool)> {
    match *shape {
        [t, c] => Ok((1, t, c, false)),
        [b, t, c] => Ok((b, t, c, true)),
        _ => Err(shape_err!("squeeze-excitation input must be [T,C] or [B,T,C], got {shape:?}")),
    }
}

/// Channel attention over a window: average over rows, bottleneck
/// `relu(z W1 + b1)`, gate `sigmoid(h W2 + b2)`, then every row is scaled
/// channel-wise by the gate.
pub fn se_block(x: &Tensor, params: &SeParams) -> Result<Tensor> {
    SeBlock::forward(x, params).map(|(y, _)| y)
}

pub struct SeGrads {
    pub input: Tensor,
    pub params: SeParams,
}

/// Recorded [`se_block`] call.
pub struct SeBlock {
    x: Tensor,
    gate: Tensor,
    fc1: Dense,
    relu: Relu,
    fc2: Dense,
    sigmoid: Sigmoid,
}

impl SeBlock {
    pub fn forward(x: &Tensor, params: &SeParams) -> Result<(Tensor, Self)> {
        let (b, t, c, _) = split_dims(x.shape())?;
        if params.w1.shape().first() != Some(&c) {
            return Err(shape_err!("squeeze weights {:?} do not fit {c} channels", params.w1.shape()));
        }
        let xd = x.data();
        let mut z = vec![0.0; b * c];
        for n in 0..b {
            let zr = &mut z[n * c..(n + 1) * c];
            for row in xd[n * t * c..(n + 1) * t * c].chunks_exact(c) {
                for (zv, &v) in zr.iter_mut().zip(row) {
                    *zv += v;
                }
            }
            zr.iter_mut().for_each(|v| *v /= t as f64);
        }
        let z = Tensor::from_parts(vec![b, c], z);
        let (h, fc1) = Dense::forward(&z, &params.w1, &params.b1)?;
        let (h, relu) = Relu::forward(&h);
        let (g, fc2) = Dense::forward(&h, &params.w2, &params.b2)?;
        let (gate, sigmoid) = Sigmoid::forward(&g);
        let gd = gate.data();
        let mut out = Vec::with_capacity(xd.len());
        for n in 0..b {
            let gr = &gd[n * c..(n + 1) * c];
            for row in xd[n * t * c..(n + 1) * t * c].chunks_exact(c) {
                out.extend(row.iter().zip(gr).map(|(v, s)| v * s));
            }
        }
        let y = Tensor::from_parts(x.shape().to_vec(), out);
        Ok((y, Self { x: x.clone(), gate, fc1, relu, fc2, sigmoid }))
    }

    /// Per-sample channel gates, `[batch, channels]`.
    pub fn gate(&self) -> &Tensor {
        &self.gate
    }
}

impl Backward for SeBlock {
    type Grads = SeGrads;

    fn backward(self, upstream: &Tensor) -> Result<SeGrads> {
        check_upstream(self.x.shape(), upstream, "se_block")?;
        let (b, t, c, _) = split_dims(self.x.shape())?;
        let (xd, ud, gd) = (self.x.data(), upstream.data(), self.gate.data());
        let mut dx = vec![0.0; xd.len()];
        let mut dgate = vec![0.0; b * c];
        for n in 0..b {
            let span = n * t * c..(n + 1) * t * c;
            for ((xr, ur), dr) in xd[span.clone()].chunks_exact(c).zip(ud[span.clone()].chunks_exact(c)).zip(dx[span].chunks_exact_mut(c)) {
                for j in 0..c {
                    dgate[n * c + j] += ur[j] * xr[j];
                    dr[j] = ur[j] * gd[n * c + j];
                }
            }
        }
        let dgate = Tensor::from_parts(vec![b, c], dgate);
        let dg = self.sigmoid.backward(&dgate)?;
        let g2 = self.fc2.backward(&dg)?;
        let dh = self.relu.backward(&g2.input)?;
        let g1 = self.fc1.backward(&dh)?;
        // the squeeze is a mean over rows
        let dz = g1.input.data();
        for n in 0..b {
            for row in dx[n * t * c..(n + 1) * t * c].chunks_exact_mut(c) {
                for (d, &g) in row.iter_mut().zip(&dz[n * c..(n + 1) * c]) {
                    *d += g / t as f64;
                }
            }
        }
        Ok(SeGrads { input: Tensor::from_parts(self.x.shape().to_vec(), dx), params: SeParams { w1: g1.weight, b1: g1.bias, w2: g2.weight, b2: g2.bias } })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{ops::glorot_uniform, Rng};

    fn params(rng: &mut Rng, c: usize, h: usize) -> SeParams {
        SeParams {
            w1: glorot_uniform(rng, &[c, h]).unwrap(),
            b1: Tensor::uniform(rng, &[h], -0.5, 0.5).unwrap(),
            w2: glorot_uniform(rng, &[h, c]).unwrap(),
            b2: Tensor::uniform(rng, &[c], -0.5, 0.5).unwrap(),
        }
    }

    #[test]
    fn zero_excitation_halves() {
        let mut rng = Rng::new(1);
        let mut p = params(&mut rng, 8, 2);
        p.w2 = Tensor::zeros(&[2, 8]).unwrap();
        p.b2 = Tensor::zeros(&[8]).unwrap();
        let x = Tensor::uniform(&mut rng, &[5, 8], -2.0, 2.0).unwrap();
        assert_eq!(se_block(&x, &p).unwrap(), x.scale(0.5));
    }

    #[test]
    fn zero_input_gives_zero() {
        let mut rng = Rng::new(2);
        let mut p = params(&mut rng, 8, 2);
        p.b1 = Tensor::zeros(&[2]).unwrap();
        p.b2 = Tensor::zeros(&[8]).unwrap();
        let x = Tensor::zeros(&[27, 8]).unwrap();
        assert_eq!(se_block(&x, &p).unwrap(), x);
    }

    #[test]
    fn matches_straight_line_evaluation() {
        let mut rng = Rng::new(3);
        let (t, c, h) = (7, 8, 2);
        let p = params(&mut rng, c, h);
        let x = Tensor::uniform(&mut rng, &[t, c], -2.0, 2.0).unwrap();
        let y = se_block(&x, &p).unwrap();

        let xv = |i: usize, j: usize| x.data()[i * c + j];
        let z: Vec<f64> = (0..c).map(|j| (0..t).map(|i| xv(i, j)).sum::<f64>() / t as f64).collect();
        let s1: Vec<f64> = (0..h)
            .map(|k| {
                let a: f64 = (0..c).map(|j| p.w1.data()[j * h + k] * z[j]).sum::<f64>() + p.b1.data()[k];
                a.max(0.0)
            })
            .collect();
        let s: Vec<f64> = (0..c)
            .map(|j| {
                let a: f64 = (0..h).map(|k| p.w2.data()[k * c + j] * s1[k]).sum::<f64>() + p.b2.data()[j];
                1.0 / (1.0 + (-a).exp())
            })
            .collect();
        for i in 0..t {
            for j in 0..c {
                assert!((y.data()[i * c + j] - xv(i, j) * s[j]).abs() <= 1e-12);
            }
        }
        assert!(s.iter().all(|&g| g > 0.0 && g < 1.0));
    }

    #[test]
    fn batched_equals_per_sample() {
        let mut rng = Rng::new(4);
        let p = params(&mut rng, 4, 2);
        let x = Tensor::uniform(&mut rng, &[3, 5, 4], -1.0, 1.0).unwrap();
        let y = se_block(&x, &p).unwrap();
        for n in 0..3 {
            let xi = x.slice_axis(0, n, 1).unwrap().reshape(&[5, 4]).unwrap();
            let yi = se_block(&xi, &p).unwrap();
            assert_eq!(yi.data(), &y.data()[n * 20..(n + 1) * 20]);
        }
    }
}
