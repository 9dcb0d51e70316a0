//! Replay data and the ensemble training loop.

mod buffer;
mod ensemble_train;

pub use buffer::{fit_normalizer, holdout_split, ReplayBuffer};
pub use ensemble_train::{
    holdout_nll, train_ensemble, train_ensemble_with_hooks, NoHooks, TrainConfig, TrainHooks,
    TrainReport,
};
