//! Cross-entropy loss, Adam, and the epoch loop with early stopping.

mod adam;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{cross_entropy, cross_entropy_grad, PROB_FLOOR};
pub use trainer::{argmax, evaluate, train, train_with, EpochRecord, Selection, TrainConfig, TrainOutcome, TrainState};
