use crate::error::{shape_err, Result};
use crate::{Rng, Tensor};

/// Uniform Glorot bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// Glorot-uniform tensor. For rank-4 kernels `[kh, kw, in, out]` the fans
/// are `kh*kw*in` and `kh*kw*out`; for rank-2 `[in, out]` they are the two
/// extents.
pub fn glorot_uniform(rng: &mut Rng, shape: &[usize]) -> Result<Tensor> {
    let (fan_in, fan_out) = match *shape {
        [i, o] => (i, o),
        [kh, kw, i, o] => (kh * kw * i, kh * kw * o),
        _ => return Err(shape_err!("glorot init needs a rank-2 or rank-4 shape, got {shape:?}")),
    };
    let bound = glorot_bound(fan_in, fan_out);
    Tensor::uniform(rng, shape, -bound, bound)
}
