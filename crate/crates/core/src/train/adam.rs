use alloc::vec::Vec;

use crate::error::{config_err, shape_err, Result};
use crate::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(config_err!("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(config_err!("Adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(config_err!("Adam eps must be positive"));
        }
        Ok(())
    }
}

/// First and second moments, one pair per parameter tensor, plus the
/// number of steps taken.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros_like(p)).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState, config: &AdamConfig) -> Result<()> {
    config.validate()?;
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape_err!("{} parameters, {} gradients, {} moment slots", params.len(), grads.len(), state.m.len()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(shape_err!("parameter {i}: {:?} vs gradient {:?}", p.shape(), g.shape()));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(config.beta1, t);
    let c2 = 1.0 - libm::pow(config.beta2, t);
    let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, eps } = *config;
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut w = Tensor::new(&[2], vec![1.0, -2.0]).unwrap();
        let mut state = AdamState::new(&[&w]);
        state.m[0] = Tensor::new(&[2], vec![0.5, 0.5]).unwrap();
        state.v[0] = Tensor::new(&[2], vec![0.5, 0.5]).unwrap();
        let g = Tensor::zeros(&[2]).unwrap();
        let before = w.clone();
        let cfg = AdamConfig { learning_rate: 0.0, ..AdamConfig::default() };
        adam_step(&mut [&mut w], &[&g], &mut state, &cfg).unwrap();
        assert_eq!(w, before);
        assert!(state.m[0].data().iter().all(|&m| m < 0.5));
        assert!(state.v[0].data().iter().all(|&v| v < 0.5));

        let mut fresh = AdamState::new(&[&w]);
        adam_step(&mut [&mut w], &[&g], &mut fresh, &AdamConfig::default()).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut w = Tensor::zeros(&[3]).unwrap();
        let g = Tensor::new(&[3], vec![5.0, -0.3, 1e3]).unwrap();
        let mut state = AdamState::new(&[&w]);
        adam_step(&mut [&mut w], &[&g], &mut state, &AdamConfig::default()).unwrap();
        for (wi, gi) in w.data().iter().zip(g.data()) {
            assert!((wi + 1e-3 * gi.signum()).abs() < 1e-9);
        }
        assert_eq!(state.step, 1);
    }

    #[test]
    fn minimizes_squared_norm() {
        let mut w = Tensor::new(&[2], vec![1.0, 1.0]).unwrap();
        let mut state = AdamState::new(&[&w]);
        let cfg = AdamConfig { learning_rate: 0.05, ..AdamConfig::default() };
        for _ in 0..200 {
            let g = w.scale(2.0);
            adam_step(&mut [&mut w], &[&g], &mut state, &cfg).unwrap();
        }
        let norm = libm::sqrt(w.data().iter().map(|v| v * v).sum());
        assert!(norm < 1e-2, "{norm}");
    }

    #[test]
    fn shape_mismatch() {
        let mut w = Tensor::zeros(&[2]).unwrap();
        let mut state = AdamState::new(&[&w]);
        let g = Tensor::zeros(&[3]).unwrap();
        assert!(adam_step(&mut [&mut w], &[&g], &mut state, &AdamConfig::default()).is_err());
    }
}
