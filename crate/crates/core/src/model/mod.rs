//! The learned environment model: an uncertainty-aware ensemble transition
//! model composed with an initial-state sampler and the task's analytic
//! reward and termination functions.

mod ensemble;
mod env_model;

pub use ensemble::{
    bound_logvar, bound_logvar_grad, bounded_variance, EnsembleConfig, EnsembleTransitionModel, Normalizer,
    MAX_LOGVAR_INIT, MIN_LOGVAR_INIT, STD_FLOOR,
};
pub use env_model::{
    ActionSequences, EnvironmentModel, RewardFn, TerminationFn, VirtualEnv,
};

use std::sync::Arc;

use crate::env::Task;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::SimRng;

/// Whether a prediction draws from the predicted distribution or returns its mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictMode {
    Sampled,
    Mean,
}

/// One-step dynamics with one or more interchangeable members.
pub trait TransitionModel: Send + Sync {
    fn num_members(&self) -> usize;

    fn predict(
        &self,
        member: usize,
        obs: &[f64],
        action: &[f64],
        rng: &mut SimRng,
        mode: PredictMode,
    ) -> Result<Vec<f64>>;

    /// Row-wise `predict`; row `i` uses `members[i]` and draws from `rngs[i]`.
    fn predict_batch(
        &self,
        members: &[usize],
        obs: &Matrix,
        actions: &Matrix,
        rngs: &mut [SimRng],
        mode: PredictMode,
    ) -> Result<Matrix> {
        let mut out = Matrix::zeros(obs.rows, obs.cols);
        for (i, rng) in rngs.iter_mut().enumerate().take(obs.rows) {
            let next = self.predict(members[i], obs.row(i), actions.row(i), rng, mode)?;
            out.row_mut(i).copy_from_slice(&next);
        }
        Ok(out)
    }
}

/// The task's true dynamics used as a (single-member) transition model.
#[derive(Debug, Clone)]
pub struct AnalyticTransition {
    task: Arc<dyn Task>,
}

impl AnalyticTransition {
    pub fn new(task: Arc<dyn Task>) -> Self {
        AnalyticTransition { task }
    }
}

impl TransitionModel for AnalyticTransition {
    fn num_members(&self) -> usize {
        1
    }

    fn predict(
        &self,
        member: usize,
        obs: &[f64],
        action: &[f64],
        rng: &mut SimRng,
        mode: PredictMode,
    ) -> Result<Vec<f64>> {
        if member != 0 {
            return Err(Error::Usage(format!("member index {member} out of range (1 member)")));
        }
        let spec = self.task.spec();
        spec.check_obs(obs)?;
        spec.check_action(action)?;
        Ok(match mode {
            PredictMode::Sampled => self.task.transition(obs, action, rng),
            PredictMode::Mean => self.task.expected_transition(obs, action),
        })
    }
}
