//! Differentiable layer primitives.
//!
//! Each primitive comes as a plain forward function plus a context type of
//! the same name whose `forward` also keeps what the backward pass needs.
//! A context implements [`Backward`]; `backward` consumes it, so a context
//! can produce gradients at most once.

mod activation;
mod conv;
mod dense;
mod dropout;
mod init;
mod norm;
mod pool;

pub use activation::{elu, relu, sigmoid, softmax, Elu, Relu, Sigmoid, Softmax};
pub use conv::{conv2d, depthwise_conv2d, Conv2d, Conv2dGrads, ConvSpec, DepthwiseConv2d, Padding};
pub use dense::{dense, Dense, DenseGrads};
pub use dropout::{dropout, Dropout};
pub use init::{glorot_bound, glorot_uniform};
pub use norm::{batch_norm, BatchNorm, BatchNormGrads, NormConfig, RunningStats};
pub use pool::{avg_pool, AvgPool};

use crate::{Result, Tensor};

/// Vector-Jacobian product of a recorded forward call.
pub trait Backward {
    type Grads;

    /// `upstream` must have the forward output's shape.
    fn backward(self, upstream: &Tensor) -> Result<Self::Grads>;
}

/// Free-function spelling of [`Backward::backward`].
pub fn vjp<C: Backward>(context: C, upstream: &Tensor) -> Result<C::Grads> {
    context.backward(upstream)
}

pub(crate) fn check_upstream(expected: &[usize], upstream: &Tensor, op: &str) -> Result<()> {
    if upstream.shape() != expected {
        return Err(crate::error::shape_err!("{op} backward expects upstream {expected:?}, got {:?}", upstream.shape()));
    }
    Ok(())
}
