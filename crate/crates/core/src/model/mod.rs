//! The network: configuration, parameter store, attention block and the
//! batched forward/backward passes.

mod config;
mod network;
mod params;
mod se;

pub use config::ModelConfig;
pub use network::{cv_block, model_backward, model_forward, predict, sliding_windows, sp_block, ForwardTrace};
pub use params::{BatchNormParams, BranchParams, ModelParams, ParamKind, SeParams};
pub use se::{se_block, SeBlock, SeGrads};
