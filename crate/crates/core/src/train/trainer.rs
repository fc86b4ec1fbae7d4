use alloc::vec::Vec;

use super::{adam_step, cross_entropy, AdamConfig, AdamState};
use crate::data::TrialSet;
use crate::error::{config_err, Error, Result};
use crate::metrics::{accuracy_over, confusion, kappa, present_classes, ConfusionMatrix};
use crate::model::{model_backward, model_forward, predict, ModelConfig, ModelParams};
use crate::{Rng, Tensor};

/// Which validation number picks the returned snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Lowest validation loss.
    ValLoss,
    /// Highest validation accuracy, ties to the lower loss.
    ValAccuracy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping; 0 stops after the first.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub selection: Selection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 500,
            patience: 300,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            shuffle: true,
            selection: Selection::ValLoss,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(config_err!("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(config_err!("batch_size and max_epochs must be at least 1"));
        }
        if self.patience > self.max_epochs {
            return Err(config_err!("patience ({}) exceeds max_epochs ({})", self.patience, self.max_epochs));
        }
        self.adam().validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean recall over the classes present in the validation set.
    pub val_acc: f64,
    pub val_kappa: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub adam: AdamState,
    /// Validation loss of the selected snapshot.
    pub best_val_loss: f64,
    /// 0 before the first epoch.
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub history: Vec<EpochRecord>,
}

pub struct TrainOutcome {
    /// Snapshot from `state.best_epoch`.
    pub params: ModelParams,
    /// Parameters after the last epoch run.
    pub last: ModelParams,
    pub state: TrainState,
}

/// Class index of the largest entry of each row; ties go to the lowest.
pub fn argmax(probs: &Tensor) -> Vec<usize> {
    let n = probs.shape()[probs.rank() - 1];
    probs
        .data()
        .chunks(n)
        .map(|row| {
            let mut best = 0;
            for (k, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn check_compatible(model: &ModelConfig, set: &TrialSet, what: &str) -> Result<()> {
    if set.channels() != model.channels || set.samples() != model.samples {
        return Err(config_err!("{what} trials are {}x{}, model expects {}x{}", set.channels(), set.samples(), model.channels, model.samples));
    }
    if set.n_classes() != model.n_classes {
        return Err(config_err!("{what} set has {} classes, model has {}", set.n_classes(), model.n_classes));
    }
    if set.is_empty() {
        return Err(Error::Empty(alloc::format!("{what} set has no trials")));
    }
    Ok(())
}

const EVAL_CHUNK: usize = 256;

/// Evaluation-mode mean loss and confusion matrix over `trials`.
pub fn evaluate(params: &ModelParams, config: &ModelConfig, trials: &TrialSet) -> Result<(f64, ConfusionMatrix)> {
    check_compatible(config, trials, "evaluation")?;
    let all: Vec<usize> = (0..trials.len()).collect();
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(trials.len());
    for chunk in all.chunks(EVAL_CHUNK) {
        let probs = predict(&trials.batch_tensor(chunk)?, params, config)?;
        loss += cross_entropy(&probs, &trials.batch_labels(chunk))? * chunk.len() as f64;
        predictions.extend(argmax(&probs));
    }
    let cm = confusion(&predictions, trials.labels(), config.n_classes)?;
    Ok((loss / trials.len() as f64, cm))
}

fn improves(selection: Selection, rec: &EpochRecord, best: Option<&EpochRecord>) -> bool {
    let Some(best) = best else { return true };
    match selection {
        Selection::ValLoss => rec.val_loss < best.val_loss,
        Selection::ValAccuracy => rec.val_acc > best.val_acc || (rec.val_acc == best.val_acc && rec.val_loss < best.val_loss),
    }
}

/// Minibatch Adam with early stopping. See [`train_with`].
pub fn train(model: &ModelConfig, params: ModelParams, trials: &TrialSet, val: &TrialSet, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, params, trials, val, config, |_| {})
}

/// Each epoch shuffles the trial order (seeded), takes one Adam step per
/// minibatch, then evaluates on `val`. Stops after `max_epochs` or when
/// `patience` epochs pass without improvement. `on_epoch` sees every
/// record as it is produced.
///
/// Shuffling and dropout draw from separate streams of `config.seed`, so a
/// run is a pure function of its inputs.
pub fn train_with(
    model: &ModelConfig,
    mut params: ModelParams,
    trials: &TrialSet,
    val: &TrialSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    model.validate()?;
    check_compatible(model, trials, "training")?;
    check_compatible(model, val, "validation")?;
    let adam = config.adam();
    let mut order_rng = Rng::with_stream(config.seed, 1);
    let mut dropout_rng = Rng::with_stream(config.seed, 2);
    let mut state =
        TrainState { adam: AdamState::new(&params.trainable()), best_val_loss: f64::INFINITY, best_epoch: 0, epochs_since_improvement: 0, history: Vec::new() };
    let mut best = params.clone();
    let mut order: Vec<usize> = (0..trials.len()).collect();

    for epoch in 1..=config.max_epochs {
        if config.shuffle {
            order_rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = trials.batch_tensor(batch)?;
            let labels = trials.batch_labels(batch);
            let (probs, trace) = model_forward(&x, &params, model, true, &mut dropout_rng)?;
            let loss = cross_entropy(&probs, &labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite { layer: "loss".into() });
            }
            loss_sum += loss * batch.len() as f64;
            params.commit_running_stats(&trace)?;
            let grads = model_backward(trace, &labels, &params)?;
            for (name, g, _) in grads.named() {
                g.ensure_finite(&alloc::format!("gradient of {name}"))?;
            }
            adam_step(&mut params.trainable_mut(), &grads.trainable(), &mut state.adam, &adam)?;
        }
        let (val_loss, cm) = evaluate(&params, model, val)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / trials.len() as f64,
            val_loss,
            val_acc: accuracy_over(&cm, &present_classes(&cm))?,
            val_kappa: kappa(&cm)?,
        };
        on_epoch(&record);
        let best_record = state.history.get(state.best_epoch.wrapping_sub(1));
        if improves(config.selection, &record, best_record) {
            best = params.clone();
            state.best_epoch = epoch;
            state.best_val_loss = val_loss;
            state.epochs_since_improvement = 0;
        } else {
            state.epochs_since_improvement += 1;
        }
        state.history.push(record);
        if state.epochs_since_improvement >= config.patience {
            break;
        }
    }
    Ok(TrainOutcome { params: best, last: params, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth, SynthSpec};

    fn setup(seed: u64) -> (ModelConfig, ModelParams, TrialSet, TrialSet) {
        let cfg = ModelConfig::tiny(2, 32, 2);
        let cfg = ModelConfig { pool1: 4, ..cfg };
        let params = ModelParams::init(&cfg, &mut Rng::new(seed)).unwrap();
        let set = synth(&SynthSpec { class_band_hz: alloc::vec![4.0, 16.0], ..SynthSpec::new(16, 2, 32, 2, 5.0, seed) }).unwrap();
        let (a, b) = set.holdout_tail(0.25).unwrap();
        (cfg, params, a, b)
    }

    #[test]
    fn argmax_ties_to_lowest() {
        let p = Tensor::new(&[3, 3], alloc::vec![0.2, 0.4, 0.4, 0.5, 0.2, 0.3, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(argmax(&p), alloc::vec![1, 0, 0]);
    }

    #[test]
    fn patience_zero_runs_one_epoch() {
        let (cfg, params, tr, va) = setup(1);
        let tc = TrainConfig { patience: 0, max_epochs: 5, batch_size: 4, ..TrainConfig::default() };
        let out = train(&cfg, params, &tr, &va, &tc).unwrap();
        assert_eq!(out.state.history.len(), 1);
        assert_eq!(out.state.best_epoch, 1);
    }

    #[test]
    fn runs_are_reproducible() {
        let (cfg, params, tr, va) = setup(2);
        let tc = TrainConfig { max_epochs: 3, patience: 3, batch_size: 5, seed: 9, ..TrainConfig::default() };
        let a = train(&cfg, params.clone(), &tr, &va, &tc).unwrap();
        let b = train(&cfg, params, &tr, &va, &tc).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn best_snapshot_matches_best_recorded_loss() {
        let (cfg, params, tr, va) = setup(3);
        let tc = TrainConfig { max_epochs: 8, patience: 8, batch_size: 4, learning_rate: 1e-2, ..TrainConfig::default() };
        let out = train(&cfg, params, &tr, &va, &tc).unwrap();
        let min = out.state.history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(out.state.best_val_loss, min);
        let (loss, _) = evaluate(&out.params, &cfg, &va).unwrap();
        assert_eq!(loss, min);
    }

    #[test]
    fn evaluate_counts_every_trial() {
        let (cfg, params, tr, _) = setup(4);
        let (l1, cm1) = evaluate(&params, &cfg, &tr).unwrap();
        let (l2, cm2) = evaluate(&params, &cfg, &tr).unwrap();
        assert_eq!((l1, &cm1), (l2, &cm2));
        assert_eq!(cm1.total(), tr.len() as u64);
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig { patience: 501, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        let (cfg, params, tr, _) = setup(5);
        let other = synth(&SynthSpec::new(8, 3, 32, 2, 1.0, 0)).unwrap();
        assert!(matches!(train(&cfg, params, &tr, &other, &TrainConfig::default()), Err(Error::Config(_))));
    }
}
