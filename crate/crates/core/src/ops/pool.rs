use alloc::vec;
use alloc::vec::Vec;

use super::{check_upstream, Backward};
use crate::error::{config_err, shape_err, Result};
use crate::Tensor;

#[derive(Clone, Copy, Debug)]
struct PoolGeometry {
    batch: usize,
    h: usize,
    w: usize,
    c: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
    batched: bool,
}

impl PoolGeometry {
    fn new(shape: &[usize], pool: (usize, usize)) -> Result<Self> {
        let (ph, pw) = pool;
        if ph == 0 || pw == 0 {
            return Err(config_err!("pool size must be positive, got {pool:?}"));
        }
        let (batch, h, w, c, batched) = match *shape {
            [h, w, c] => (1, h, w, c, false),
            [b, h, w, c] => (b, h, w, c, true),
            _ => return Err(shape_err!("pooling input must be [H,W,C] or [B,H,W,C], got {shape:?}")),
        };
        if h < ph || w < pw {
            return Err(shape_err!("pool {pool:?} larger than input {shape:?}"));
        }
        Ok(Self { batch, h, w, c, ph, pw, oh: h / ph, ow: w / pw, batched })
    }

    fn output_shape(&self) -> Vec<usize> {
        if self.batched {
            vec![self.batch, self.oh, self.ow, self.c]
        } else {
            vec![self.oh, self.ow, self.c]
        }
    }

    /// Calls `f(input_offset, output_offset)` in channel-row units for every
    /// covered input pixel. The trailing remainder is never visited.
    fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        for n in 0..self.batch {
            for oy in 0..self.oh {
                for ox in 0..self.ow {
                    let out_px = (n * self.oh + oy) * self.ow + ox;
                    for dy in 0..self.ph {
                        for dx in 0..self.pw {
                            let in_px = (n * self.h + oy * self.ph + dy) * self.w + ox * self.pw + dx;
                            f(in_px, out_px);
                        }
                    }
                }
            }
        }
    }
}

fn pool_forward(x: &Tensor, g: &PoolGeometry) -> Tensor {
    let c = g.c;
    let norm = 1.0 / (g.ph * g.pw) as f64;
    let xd = x.data();
    let mut out = vec![0.0; g.batch * g.oh * g.ow * c];
    g.for_each(|i, o| {
        for (ov, &xv) in out[o * c..(o + 1) * c].iter_mut().zip(&xd[i * c..(i + 1) * c]) {
            *ov += xv;
        }
    });
    out.iter_mut().for_each(|v| *v *= norm);
    Tensor::from_parts(g.output_shape(), out)
}

/// Non-overlapping mean pooling with stride equal to the window; extents
/// are floored so a trailing remainder is dropped.
pub fn avg_pool(x: &Tensor, pool: (usize, usize)) -> Result<Tensor> {
    let g = PoolGeometry::new(x.shape(), pool)?;
    Ok(pool_forward(x, &g))
}

/// Recorded [`avg_pool`] call.
pub struct AvgPool {
    input_shape: Vec<usize>,
    geometry: PoolGeometry,
}

impl AvgPool {
    pub fn forward(x: &Tensor, pool: (usize, usize)) -> Result<(Tensor, Self)> {
        let geometry = PoolGeometry::new(x.shape(), pool)?;
        Ok((pool_forward(x, &geometry), Self { input_shape: x.shape().to_vec(), geometry }))
    }
}

impl Backward for AvgPool {
    type Grads = Tensor;

    fn backward(self, upstream: &Tensor) -> Result<Tensor> {
        let g = self.geometry;
        check_upstream(&g.output_shape(), upstream, "avg_pool")?;
        let c = g.c;
        let norm = 1.0 / (g.ph * g.pw) as f64;
        let ud = upstream.data();
        let mut dx = vec![0.0; self.input_shape.iter().product()];
        g.for_each(|i, o| {
            for (d, &u) in dx[i * c..(i + 1) * c].iter_mut().zip(&ud[o * c..(o + 1) * c]) {
                *d += u * norm;
            }
        });
        Ok(Tensor::from_parts(self.input_shape, dx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;

    #[test]
    fn constant_and_mean() {
        let c = avg_pool(&Tensor::full(&[16, 1, 3], 2.5).unwrap(), (8, 1)).unwrap();
        assert_eq!(c, Tensor::full(&[2, 1, 3], 2.5).unwrap());
        let x = Tensor::new(&[8, 1, 1], (1..=8).map(f64::from).collect()).unwrap();
        assert_eq!(avg_pool(&x, (8, 1)).unwrap().data(), &[4.5]);
    }

    #[test]
    fn floor_extent() {
        let y = avg_pool(&Tensor::zeros(&[2, 1125, 1, 4]).unwrap(), (8, 1)).unwrap();
        assert_eq!(y.shape(), &[2, 140, 1, 4]);
        assert!(avg_pool(&Tensor::zeros(&[4, 1, 1]).unwrap(), (0, 1)).is_err());
        assert!(avg_pool(&Tensor::zeros(&[4, 1, 1]).unwrap(), (5, 1)).is_err());
    }

    #[test]
    fn preserves_covered_mean() {
        let mut rng = Rng::new(11);
        let x = Tensor::uniform(&mut rng, &[3, 37, 2, 5], -1.0, 1.0).unwrap();
        let y = avg_pool(&x, (4, 1)).unwrap();
        let covered = x.slice_axis(1, 0, 36).unwrap();
        let lhs = y.sum() / y.len() as f64;
        let rhs = covered.sum() / covered.len() as f64;
        assert!((lhs - rhs).abs() < 1e-14);
    }
}
