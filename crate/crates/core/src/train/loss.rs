use alloc::vec;

use crate::error::{shape_err, Error, Result};
use crate::Tensor;

/// Probabilities are clamped to this before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

fn check(probs: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    let (b, n) = match *probs.shape() {
        [b, n] => (b, n),
        _ => return Err(shape_err!("probabilities must be [B, n], got {:?}", probs.shape())),
    };
    if labels.len() != b {
        return Err(shape_err!("{} labels for a batch of {b}", labels.len()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n) {
        return Err(Error::Label { label, n_classes: n });
    }
    Ok((b, n))
}

/// Mean over the batch of `-ln(max(p[label], PROB_FLOOR))`.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let (b, n) = check(probs, labels)?;
    let total: f64 = labels.iter().enumerate().map(|(i, &l)| -libm::log(probs.data()[i * n + l].max(PROB_FLOOR))).sum();
    Ok(total / b as f64)
}

/// Gradient of [`cross_entropy`] with respect to `probs`. Zero where the
/// floor is active.
pub fn cross_entropy_grad(probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (b, n) = check(probs, labels)?;
    let mut g = vec![0.0; b * n];
    for (i, &l) in labels.iter().enumerate() {
        let p = probs.data()[i * n + l];
        if p > PROB_FLOOR {
            g[i * n + l] = -1.0 / (b as f64 * p);
        }
    }
    Tensor::new(&[b, n], g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let one_hot = Tensor::new(&[1, 3], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(cross_entropy(&one_hot, &[1]).unwrap(), 0.0);
        let uniform = Tensor::full(&[2, 4], 0.25).unwrap();
        assert!((cross_entropy(&uniform, &[0, 3]).unwrap() - 4f64.ln()).abs() < 1e-15);
        let p = Tensor::new(&[2, 2], vec![0.7, 0.3, 0.4, 0.6]).unwrap();
        let (a, b) = (-(0.7f64).ln(), -(0.6f64).ln());
        assert!((cross_entropy(&p, &[0, 1]).unwrap() - (a + b) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn floor_keeps_loss_finite() {
        let p = Tensor::new(&[1, 2], vec![1.0, 0.0]).unwrap();
        let l = cross_entropy(&p, &[1]).unwrap();
        assert!((l - (-(1e-12f64).ln())).abs() < 1e-9);
        assert_eq!(cross_entropy_grad(&p, &[1]).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn invalid_labels() {
        let p = Tensor::full(&[2, 3], 1.0 / 3.0).unwrap();
        assert_eq!(cross_entropy(&p, &[0, 3]), Err(Error::Label { label: 3, n_classes: 3 }));
        assert!(matches!(cross_entropy(&p, &[0]), Err(Error::Shape(_))));
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let p = Tensor::new(&[2, 3], vec![0.2, 0.5, 0.3, 0.1, 0.1, 0.8]).unwrap();
        let labels = [1, 2];
        let g = cross_entropy_grad(&p, &labels).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            let mut plus = p.clone();
            plus.data_mut()[i] += h;
            let mut minus = p.clone();
            minus.data_mut()[i] -= h;
            let fd = (cross_entropy(&plus, &labels).unwrap() - cross_entropy(&minus, &labels).unwrap()) / (2.0 * h);
            assert!((fd - g.data()[i]).abs() < 1e-7);
        }
    }
}
