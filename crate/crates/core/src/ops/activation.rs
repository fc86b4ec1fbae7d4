use alloc::vec::Vec;

use super::{check_upstream, Backward};
use crate::error::{config_err, shape_err, Result};
use crate::Tensor;

fn elu_value(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * libm::expm1(x)
    }
}

fn sigmoid_value(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn elu(x: &Tensor, alpha: f64) -> Result<Tensor> {
    if !(alpha > 0.0) {
        return Err(config_err!("elu alpha must be positive, got {alpha}"));
    }
    Ok(x.map(|v| elu_value(v, alpha)))
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_value)
}

/// Max-subtracted softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(shape_err!("softmax axis {axis} out of range for {:?}", x.shape()));
    }
    let shape = x.shape();
    let extent = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer = x.len() / (extent * inner);
    let xd = x.data();
    let mut out = x.data().to_vec();
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * extent + k) * inner + i;
            let max = (0..extent).map(|k| xd[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..extent {
                let e = libm::exp(xd[at(k)] - max);
                out[at(k)] = e;
                total += e;
            }
            for k in 0..extent {
                out[at(k)] /= total;
            }
        }
    }
    Ok(Tensor::from_parts(shape.to_vec(), out))
}

/// Recorded [`elu`] call.
pub struct Elu {
    x: Tensor,
    alpha: f64,
}

impl Elu {
    pub fn forward(x: &Tensor, alpha: f64) -> Result<(Tensor, Self)> {
        Ok((elu(x, alpha)?, Self { x: x.clone(), alpha }))
    }
}

impl Backward for Elu {
    type Grads = Tensor;

    fn backward(self, upstream: &Tensor) -> Result<Tensor> {
        check_upstream(self.x.shape(), upstream, "elu")?;
        let alpha = self.alpha;
        let data = self.x.data().iter().zip(upstream.data()).map(|(&x, &u)| if x > 0.0 { u } else { u * alpha * libm::exp(x) }).collect();
        Ok(Tensor::from_parts(self.x.shape().to_vec(), data))
    }
}

/// Recorded [`relu`] call.
pub struct Relu {
    x: Tensor,
}

impl Relu {
    pub fn forward(x: &Tensor) -> (Tensor, Self) {
        (relu(x), Self { x: x.clone() })
    }
}

impl Backward for Relu {
    type Grads = Tensor;

    fn backward(self, upstream: &Tensor) -> Result<Tensor> {
        check_upstream(self.x.shape(), upstream, "relu")?;
        let data = self.x.data().iter().zip(upstream.data()).map(|(&x, &u)| if x > 0.0 { u } else { 0.0 }).collect();
        Ok(Tensor::from_parts(self.x.shape().to_vec(), data))
    }
}

/// Recorded [`sigmoid`] call; keeps the output.
pub struct Sigmoid {
    y: Tensor,
}

impl Sigmoid {
    pub fn forward(x: &Tensor) -> (Tensor, Self) {
        let y = sigmoid(x);
        (y.clone(), Self { y })
    }
}

impl Backward for Sigmoid {
    type Grads = Tensor;

    fn backward(self, upstream: &Tensor) -> Result<Tensor> {
        check_upstream(self.y.shape(), upstream, "sigmoid")?;
        let data = self.y.data().iter().zip(upstream.data()).map(|(&y, &u)| u * y * (1.0 - y)).collect();
        Ok(Tensor::from_parts(self.y.shape().to_vec(), data))
    }
}

/// Recorded [`softmax`] call; keeps the output.
pub struct Softmax {
    y: Tensor,
    axis: usize,
}

impl Softmax {
    pub fn forward(x: &Tensor, axis: usize) -> Result<(Tensor, Self)> {
        let y = softmax(x, axis)?;
        Ok((y.clone(), Self { y, axis }))
    }
}

impl Backward for Softmax {
    type Grads = Tensor;

    fn backward(self, upstream: &Tensor) -> Result<Tensor> {
        check_upstream(self.y.shape(), upstream, "softmax")?;
        let shape = self.y.shape();
        let extent = shape[self.axis];
        let inner: usize = shape[self.axis + 1..].iter().product();
        let outer = self.y.len() / (extent * inner);
        let (yd, ud) = (self.y.data(), upstream.data());
        let mut dx: Vec<f64> = alloc::vec![0.0; yd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * extent + k) * inner + i;
                let dot: f64 = (0..extent).map(|k| yd[at(k)] * ud[at(k)]).sum();
                for k in 0..extent {
                    dx[at(k)] = yd[at(k)] * (ud[at(k)] - dot);
                }
            }
        }
        Ok(Tensor::from_parts(shape.to_vec(), dx))
    }
}
