use super::policy::{GaussianPolicy, ValueFunction};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::model::{EnvironmentModel, TransitionModel};
use crate::nn::Matrix;
use crate::rng::{fork_seed, SimRng};

/// Aligned per-step arrays of one on-policy collection.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub observations: Matrix,
    /// Unclipped policy samples; log-probabilities refer to these.
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    /// True termination: nothing is bootstrapped past this step.
    pub terminals: Vec<bool>,
    /// Episode ends after this step, by termination or truncation.
    pub boundaries: Vec<bool>,
    /// `V(s_{t+1})` at truncated boundaries, zero elsewhere.
    pub truncation_values: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// `V` of the observation following the last step when that step is not
    /// a boundary.
    pub bootstrap_value: f64,
    pub advantages: Option<Vec<f64>>,
    pub returns: Option<Vec<f64>>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Fills `advantages` and `returns`. A truncated step's reward is
    /// augmented by `γ·V(s_{t+1})` and the step is treated as final, which
    /// bootstraps every truncated segment tail.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) {
        let rewards: Vec<f64> = self
            .rewards
            .iter()
            .zip(&self.truncation_values)
            .map(|(r, v)| r + gamma * v)
            .collect();
        let (adv, ret) = gae_advantages(&rewards, &self.values, self.bootstrap_value, &self.boundaries, gamma, lambda);
        self.advantages = Some(adv);
        self.returns = Some(ret);
    }
}

/// Generalized advantage estimation.
///
/// `terminals[t]` stops both bootstrapping and accumulation after step `t`;
/// `bootstrap_value` is `V` of the state after the last step.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    bootstrap_value: f64,
    terminals: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && terminals.len() == n, "GAE inputs must be aligned");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap_value;
    for t in (0..n).rev() {
        let live = if terminals[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Runs the stochastic policy for exactly `n_steps` in `env`, starting a new
/// episode at the beginning and after every boundary. Episodes are cut after
/// `max_horizon` steps.
pub fn collect_rollouts(
    policy: &GaussianPolicy,
    value: &ValueFunction,
    env: &mut dyn Environment,
    n_steps: usize,
    max_horizon: usize,
    rng: &mut SimRng,
) -> Result<TrajectoryBatch> {
    if n_steps == 0 || max_horizon == 0 {
        return Err(Error::Usage("rollout collection needs n_steps ≥ 1 and max_horizon ≥ 1".into()));
    }
    let d = env.spec().obs_dim;
    let da = env.spec().action_dim;
    let mut batch = TrajectoryBatch {
        observations: Matrix::zeros(n_steps, d),
        actions: Matrix::zeros(n_steps, da),
        rewards: Vec::with_capacity(n_steps),
        terminals: Vec::with_capacity(n_steps),
        boundaries: Vec::with_capacity(n_steps),
        truncation_values: Vec::with_capacity(n_steps),
        log_probs: Vec::with_capacity(n_steps),
        values: Vec::with_capacity(n_steps),
        bootstrap_value: 0.0,
        advantages: None,
        returns: None,
    };
    let mut obs = env.reset(rng);
    let mut t_ep = 0;
    for t in 0..n_steps {
        let (action, lp) = policy.sample(&obs, rng)?;
        let v = value.value(&obs)?;
        let step = env.step(&action)?;
        t_ep += 1;
        let terminal = step.terminal && !step.truncated;
        let boundary = step.terminal || t_ep >= max_horizon;
        batch.observations.row_mut(t).copy_from_slice(&obs);
        batch.actions.row_mut(t).copy_from_slice(&action);
        if !step.reward.is_finite() {
            return Err(Error::NonFinite(format!("rollout reward is {}", step.reward)));
        }
        batch.rewards.push(step.reward);
        batch.terminals.push(terminal);
        batch.boundaries.push(boundary);
        batch.log_probs.push(lp);
        batch.values.push(v);
        let tail_value = if !terminal && (boundary || t + 1 == n_steps) {
            value.value(&step.observation)?
        } else {
            0.0
        };
        batch.truncation_values.push(if boundary && !terminal { tail_value } else { 0.0 });
        if t + 1 == n_steps && !boundary {
            batch.bootstrap_value = tail_value;
        }
        if boundary {
            if t + 1 < n_steps {
                obs = env.reset(rng);
            }
            t_ep = 0;
        } else {
            obs = step.observation;
        }
    }
    Ok(batch)
}

/// [`collect_rollouts`] inside the environment model. Each step samples a
/// fresh ensemble member; resets draw from the model's initial states.
pub fn collect_virtual_rollouts<T: TransitionModel>(
    policy: &GaussianPolicy,
    value: &ValueFunction,
    model: &EnvironmentModel<T>,
    n_steps: usize,
    max_horizon: usize,
    rng: &mut SimRng,
) -> Result<TrajectoryBatch> {
    if model.initial_states().is_empty() {
        return Err(Error::InsufficientData(
            "virtual rollouts need at least one recorded initial state".into(),
        ));
    }
    let mut env = model.env(fork_seed(rng));
    collect_rollouts(policy, value, &mut env, n_steps, max_horizon, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_zero() {
        let (a, r) = gae_advantages(&[1.0, 2.0, 3.0], &[0.5, 0.5, 1.0], 9.0, &[false; 3], 0.0, 0.95);
        assert_eq!(a, vec![0.5, 1.5, 2.0]);
        assert_eq!(r, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn hand_unrolled() {
        let (a, _) = gae_advantages(&[1.0, 1.0], &[0.0, 0.0], 0.0, &[false, false], 1.0, 1.0);
        assert_eq!(a, vec![2.0, 1.0]);
        let (a, _) = gae_advantages(&[1.0], &[0.5], 100.0, &[true], 0.99, 0.95);
        assert_eq!(a, vec![0.5]);
    }

    #[test]
    fn bootstrap_used_without_terminal() {
        let (a, _) = gae_advantages(&[0.0], &[0.0], 2.0, &[false], 0.5, 1.0);
        assert_eq!(a, vec![1.0]);
    }
}
