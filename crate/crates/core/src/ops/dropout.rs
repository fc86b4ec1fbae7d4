use alloc::vec::Vec;

use super::{check_upstream, Backward};
use crate::error::{config_err, Result};
use crate::{Rng, Tensor};

/// Inverted dropout: in training each element is zeroed with probability
/// `p` and survivors are scaled by `1 / (1 - p)`. Evaluation (or `p == 0`)
/// is the identity and draws nothing from `rng`.
pub fn dropout(x: &Tensor, p: f64, training: bool, rng: &mut Rng) -> Result<Tensor> {
    Dropout::forward(x, p, training, rng).map(|(y, _)| y)
}

/// Recorded [`dropout`] call; keeps the scaled mask.
pub struct Dropout {
    shape: Vec<usize>,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn forward(x: &Tensor, p: f64, training: bool, rng: &mut Rng) -> Result<(Tensor, Self)> {
        if !(0.0..1.0).contains(&p) {
            return Err(config_err!("dropout probability must be in [0, 1), got {p}"));
        }
        let shape = x.shape().to_vec();
        if !training || p == 0.0 {
            return Ok((x.clone(), Self { shape, mask: None }));
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..x.len()).map(|_| if rng.next_f64() < p { 0.0 } else { keep }).collect();
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        Ok((Tensor::from_parts(shape.clone(), data), Self { shape, mask: Some(mask) }))
    }
}

impl Backward for Dropout {
    type Grads = Tensor;

    fn backward(self, upstream: &Tensor) -> Result<Tensor> {
        check_upstream(&self.shape, upstream, "dropout")?;
        Ok(match self.mask {
            None => upstream.clone(),
            Some(mask) => {
                let data = upstream.data().iter().zip(&mask).map(|(u, m)| u * m).collect();
                Tensor::from_parts(self.shape, data)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_cases() {
        let mut rng = Rng::new(1);
        let x = Tensor::uniform(&mut rng, &[10], -1.0, 1.0).unwrap();
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.9, false, &mut rng).unwrap(), x);
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
        assert!(dropout(&x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn large_sample_rates() {
        let mut rng = Rng::new(2);
        let x = Tensor::ones(&[100_000]).unwrap();
        let y = dropout(&x, 0.25, true, &mut rng).unwrap();
        let mean = y.sum() / y.len() as f64;
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!((zeros - 0.25).abs() < 0.01, "zero fraction {zeros}");
    }

    #[test]
    fn backward_reuses_mask() {
        let mut rng = Rng::new(3);
        let x = Tensor::ones(&[64]).unwrap();
        let (y, ctx) = Dropout::forward(&x, 0.5, true, &mut rng).unwrap();
        let g = ctx.backward(&Tensor::ones(&[64]).unwrap()).unwrap();
        assert_eq!(g, y);
    }
}
