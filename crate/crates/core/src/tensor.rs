use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::Rng;

/// Dense row-major array of `f64`.
///
/// `shape` has at least one axis and every extent is at least one, so
/// `data.len()` is always the product of the extents. Operations return new
/// tensors; nothing is mutated behind a shared reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn element_count(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(shape_err!("tensor must have at least one axis"));
    }
    if let Some(axis) = shape.iter().position(|&e| e == 0) {
        return Err(shape_err!("extent of axis {axis} is zero in {shape:?}"));
    }
    Ok(shape.iter().product())
}

/// Splits `shape` around `axis` into (outer, extent, inner) element counts.
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tensor {
    /// Builds a tensor, rejecting shape/length mismatches and non-finite data.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = element_count(shape)?;
        if n != data.len() {
            return Err(shape_err!("shape {shape:?} holds {n} elements but {} were given", data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: "tensor construction".into() });
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    /// Unchecked constructor for kernels that already validated `shape`.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let n = element_count(shape)?;
        Ok(Self::from_parts(shape.to_vec(), vec![value; n]))
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 1.0)
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Self::from_parts(other.shape.clone(), vec![0.0; other.data.len()])
    }

    /// Independent uniform draws in `[lo, hi)`, consumed from `rng` in
    /// row-major order.
    pub fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Config(alloc::format!("uniform bounds {lo} >= {hi}")));
        }
        let n = element_count(shape)?;
        let data = (0..n).map(|_| rng.uniform(lo, hi)).collect();
        Ok(Self::from_parts(shape.to_vec(), data))
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(&[n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Fails with [`Error::NonFinite`] naming `layer` if any element is NaN or
    /// infinite.
    pub fn ensure_finite(&self, layer: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { layer: layer.into() })
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n = element_count(shape)?;
        if n != self.data.len() {
            return Err(shape_err!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        Ok(Self::from_parts(shape.to_vec(), self.data.clone()))
    }

    pub(crate) fn into_reshaped(self, shape: &[usize]) -> Result<Tensor> {
        let n = element_count(shape)?;
        if n != self.data.len() {
            return Err(shape_err!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        Ok(Self::from_parts(shape.to_vec(), self.data))
    }

    /// Reorders axes so output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank {
            return Err(shape_err!("permutation {axes:?} does not match rank {rank}"));
        }
        for &a in axes {
            if a >= rank || seen[a] {
                return Err(shape_err!("{axes:?} is not a permutation of 0..{rank}"));
            }
            seen[a] = true;
        }

        let mut in_strides = vec![1usize; rank];
        for i in (0..rank.saturating_sub(1)).rev() {
            in_strides[i] = in_strides[i + 1] * self.shape[i + 1];
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();

        let mut out = Vec::with_capacity(self.data.len());
        let mut index = vec![0usize; rank];
        let mut offset = 0usize;
        for _ in 0..self.data.len() {
            out.push(self.data[offset]);
            // odometer increment over the output index
            for d in (0..rank).rev() {
                index[d] += 1;
                offset += strides[d];
                if index[d] < out_shape[d] {
                    break;
                }
                offset -= strides[d] * out_shape[d];
                index[d] = 0;
            }
        }
        Ok(Self::from_parts(out_shape, out))
    }

    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(shape_err!("axis {axis} out of range for {:?}", self.shape));
        }
        if len == 0 || start + len > self.shape[axis] {
            return Err(shape_err!("slice {start}..{} outside extent {} of axis {axis}", start + len, self.shape[axis]));
        }
        let (outer, extent, inner) = split_at_axis(&self.shape, axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            out.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Ok(Self::from_parts(shape, out))
    }

    /// Zero-pads along `axis`: the inverse of [`Tensor::slice_axis`] for
    /// gradients.
    pub fn pad_axis(&self, axis: usize, before: usize, after: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(shape_err!("axis {axis} out of range for {:?}", self.shape));
        }
        let (outer, extent, inner) = split_at_axis(&self.shape, axis);
        let full = before + extent + after;
        let mut out = vec![0.0; outer * full * inner];
        for o in 0..outer {
            let src = o * extent * inner;
            let dst = (o * full + before) * inner;
            out[dst..dst + extent * inner].copy_from_slice(&self.data[src..src + extent * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = full;
        Ok(Self::from_parts(shape, out))
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| shape_err!("concat of zero tensors"))?;
        if axis >= first.rank() {
            return Err(shape_err!("axis {axis} out of range for {:?}", first.shape));
        }
        for p in parts {
            let compatible = p.rank() == first.rank() && p.shape.iter().zip(&first.shape).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(shape_err!("cannot concat {:?} with {:?} on axis {axis}", p.shape, first.shape));
            }
        }
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let (outer, _, inner) = split_at_axis(&first.shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape[axis] * inner;
                out.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        Ok(Self::from_parts(shape, out))
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (&[m, k], &[k2, n]) = (self.shape.as_slice(), other.shape.as_slice()) else {
            return Err(shape_err!("matmul needs rank-2 operands, got {:?} and {:?}", self.shape, other.shape));
        };
        if k != k2 {
            return Err(shape_err!("matmul inner extents differ: {:?} x {:?}", self.shape, other.shape));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let b = &other.data[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Ok(Self::from_parts(vec![m, n], out))
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(shape_err!("elementwise shapes differ: {:?} vs {:?}", self.shape, other.shape));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err!("elementwise shapes differ: {:?} vs {:?}", self.shape, other.shape));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }
}
