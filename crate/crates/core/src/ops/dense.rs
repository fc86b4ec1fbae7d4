use alloc::vec;
use alloc::vec::Vec;

use super::{check_upstream, Backward};
use crate::error::{shape_err, Result};
use crate::Tensor;

fn dims(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    let k = *x.shape().last().unwrap_or(&0);
    match *w.shape() {
        [wk, n] if wk == k && b.shape() == [n] => Ok((x.len() / k, k, n)),
        _ => Err(shape_err!("dense weights {:?} / bias {:?} do not fit input {:?}", w.shape(), b.shape(), x.shape())),
    }
}

fn output_shape(x: &Tensor, n: usize) -> Vec<usize> {
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("rank >= 1") = n;
    shape
}

/// Affine map on the last axis: `x @ w + b` with `w` shaped `[k, n]`.
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (rows, k, n) = dims(x, w, b)?;
    let flat = Tensor::from_parts(vec![rows, k], x.data().to_vec());
    let mut y = flat.matmul(w)?.into_data();
    for row in y.chunks_exact_mut(n) {
        for (v, bv) in row.iter_mut().zip(b.data()) {
            *v += bv;
        }
    }
    Ok(Tensor::from_parts(output_shape(x, n), y))
}

pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Recorded [`dense`] call.
pub struct Dense {
    x: Tensor,
    w: Tensor,
}

impl Dense {
    pub fn forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(Tensor, Self)> {
        Ok((dense(x, w, b)?, Self { x: x.clone(), w: w.clone() }))
    }
}

impl Backward for Dense {
    type Grads = DenseGrads;

    fn backward(self, upstream: &Tensor) -> Result<DenseGrads> {
        let (k, n) = (self.w.shape()[0], self.w.shape()[1]);
        check_upstream(&output_shape(&self.x, n), upstream, "dense")?;
        let (xd, wd, ud) = (self.x.data(), self.w.data(), upstream.data());
        let mut dx = vec![0.0; xd.len()];
        let mut dw = vec![0.0; wd.len()];
        let mut db = vec![0.0; n];
        for ((xr, ur), dxr) in xd.chunks_exact(k).zip(ud.chunks_exact(n)).zip(dx.chunks_exact_mut(k)) {
            for (d, &u) in db.iter_mut().zip(ur) {
                *d += u;
            }
            for p in 0..k {
                let wrow = &wd[p * n..(p + 1) * n];
                dxr[p] = wrow.iter().zip(ur).map(|(w, u)| w * u).sum();
                for (d, &u) in dw[p * n..(p + 1) * n].iter_mut().zip(ur) {
                    *d += xr[p] * u;
                }
            }
        }
        Ok(DenseGrads {
            input: Tensor::from_parts(self.x.shape().to_vec(), dx),
            weight: Tensor::from_parts(self.w.shape().to_vec(), dw),
            bias: Tensor::from_parts(vec![n], db),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;

    #[test]
    fn identity_and_zero_input() {
        let mut rng = Rng::new(1);
        let x = Tensor::uniform(&mut rng, &[2, 3, 4], -1.0, 1.0).unwrap();
        let mut eye = Tensor::zeros(&[4, 4]).unwrap();
        for i in 0..4 {
            eye.data_mut()[i * 5] = 1.0;
        }
        let zero_b = Tensor::zeros(&[4]).unwrap();
        assert_eq!(dense(&x, &eye, &zero_b).unwrap(), x);

        let b = Tensor::from_vec(vec![1.0, 2.0]).unwrap();
        let w = Tensor::uniform(&mut rng, &[3, 2], -1.0, 1.0).unwrap();
        let y = dense(&Tensor::zeros(&[5, 3]).unwrap(), &w, &b).unwrap();
        for row in y.data().chunks(2) {
            assert_eq!(row, b.data());
        }
    }

    #[test]
    fn matches_matmul_plus_bias() {
        let mut rng = Rng::new(2);
        let x = Tensor::uniform(&mut rng, &[6, 5], -1.0, 1.0).unwrap();
        let w = Tensor::uniform(&mut rng, &[5, 3], -1.0, 1.0).unwrap();
        let b = Tensor::uniform(&mut rng, &[3], -1.0, 1.0).unwrap();
        let y = dense(&x, &w, &b).unwrap();
        for i in 0..6 {
            for j in 0..3 {
                let expect: f64 = (0..5).map(|p| x.data()[i * 5 + p] * w.data()[p * 3 + j]).sum::<f64>() + b.data()[j];
                assert!((y.data()[i * 3 + j] - expect).abs() <= 1e-12);
            }
        }
        assert!(dense(&x, &Tensor::zeros(&[4, 3]).unwrap(), &b).is_err());
    }

    #[test]
    fn bias_gradient_sums_leading_axes() {
        let mut rng = Rng::new(3);
        let x = Tensor::uniform(&mut rng, &[2, 3, 4], -1.0, 1.0).unwrap();
        let w = Tensor::uniform(&mut rng, &[4, 2], -1.0, 1.0).unwrap();
        let (_, ctx) = Dense::forward(&x, &w, &Tensor::zeros(&[2]).unwrap()).unwrap();
        let u = Tensor::uniform(&mut rng, &[2, 3, 2], -1.0, 1.0).unwrap();
        let g = ctx.backward(&u).unwrap();
        for j in 0..2 {
            let s: f64 = u.data().iter().skip(j).step_by(2).sum();
            assert!((g.bias.data()[j] - s).abs() < 1e-15);
        }
    }
}
