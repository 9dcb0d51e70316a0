//! Real environments and the interface every environment (real or learned)
//! exposes to agents.

mod linear_gaussian;
mod pendulum;

pub use linear_gaussian::{linear_gaussian_reward, LinearGaussian, LinearGaussianParams};
pub use pendulum::{angle_normalize, pendulum_reward, Pendulum};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Closed interval for one action dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub low: f64,
    pub high: f64,
}

impl Bound {
    pub fn new(low: f64, high: f64) -> Self {
        Bound { low, high }
    }

    pub fn clip(&self, x: f64) -> f64 {
        x.clamp(self.low, self.high)
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.low + self.high)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub action_bounds: Vec<Bound>,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    pub fn new(obs_dim: usize, action_bounds: Vec<Bound>, max_episode_steps: usize) -> Result<Self> {
        if obs_dim == 0 || action_bounds.is_empty() || max_episode_steps == 0 {
            return Err(Error::Config(
                "environment dimensions and episode length must be at least 1".into(),
            ));
        }
        if action_bounds.iter().any(|b| !(b.low <= b.high)) {
            return Err(Error::Config("action bound with low > high".into()));
        }
        Ok(EnvSpec {
            obs_dim,
            action_dim: action_bounds.len(),
            action_bounds,
            max_episode_steps,
        })
    }

    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(&self.action_bounds)
            .map(|(&a, b)| b.clip(a))
            .collect()
    }

    pub fn check_action(&self, action: &[f64]) -> Result<()> {
        if action.len() != self.action_dim {
            return Err(Error::dims("action", self.action_dim, action.len()));
        }
        Ok(())
    }

    pub fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim {
            return Err(Error::dims("observation", self.obs_dim, obs.len()));
        }
        Ok(())
    }
}

/// One agent-environment interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Outcome of a single `step`.
///
/// `terminal` is set when either the termination predicate fires or the step
/// cap is reached; `truncated` distinguishes the latter so value-based
/// learners can bootstrap through time limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

/// The analytic pieces of a task: initial-state distribution, true dynamics,
/// reward and termination. Real environments run these directly; learned
/// environment models borrow the reward and termination functions.
pub trait Task: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &str;
    fn spec(&self) -> &EnvSpec;
    fn sample_initial(&self, rng: &mut SimRng) -> Vec<f64>;
    /// True dynamics. `action` is already clipped to bounds.
    fn transition(&self, obs: &[f64], action: &[f64], rng: &mut SimRng) -> Vec<f64>;
    /// Noise-free part of the dynamics.
    fn expected_transition(&self, obs: &[f64], action: &[f64]) -> Vec<f64>;
    fn reward(&self, obs: &[f64], action: &[f64]) -> f64;
    fn is_terminal(&self, next_obs: &[f64]) -> bool;
}

/// Reset/step contract shared by real environments and learned models.
pub trait Environment {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<Step>;
}

/// A real environment: a [`Task`] plus episode bookkeeping and its own noise
/// stream.
#[derive(Debug, Clone)]
pub struct RealEnv {
    task: Arc<dyn Task>,
    rng: SimRng,
    current: Option<Vec<f64>>,
    episode_steps: usize,
    total_steps: u64,
    last_effective_action: Option<Vec<f64>>,
}

impl RealEnv {
    pub fn new(task: Arc<dyn Task>, seed: u64) -> Self {
        RealEnv {
            task,
            rng: crate::rng::seeded(seed),
            current: None,
            episode_steps: 0,
            total_steps: 0,
            last_effective_action: None,
        }
    }

    pub fn task(&self) -> &Arc<dyn Task> {
        &self.task
    }

    /// Number of `step` calls over the lifetime of this environment.
    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn episode_steps(&self) -> usize {
        self.episode_steps
    }

    pub fn observation(&self) -> Option<&[f64]> {
        self.current.as_deref()
    }

    /// Action actually fed to the dynamics on the last step, after clipping.
    pub fn last_effective_action(&self) -> Option<&[f64]> {
        self.last_effective_action.as_deref()
    }

    /// Starts an episode from a chosen observation.
    pub fn reset_to(&mut self, obs: Vec<f64>) -> Result<()> {
        self.task.spec().check_obs(&obs)?;
        self.current = Some(obs);
        self.episode_steps = 0;
        Ok(())
    }
}

impl Environment for RealEnv {
    fn spec(&self) -> &EnvSpec {
        self.task.spec()
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        let obs = self.task.sample_initial(rng);
        self.current = Some(obs.clone());
        self.episode_steps = 0;
        obs
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let spec = self.task.spec();
        spec.check_action(action)?;
        let obs = self
            .current
            .take()
            .ok_or_else(|| Error::Usage("step called on a finished episode; call reset".into()))?;
        let action = spec.clip_action(action);
        let reward = self.task.reward(&obs, &action);
        let next = self.task.transition(&obs, &action, &mut self.rng);
        self.episode_steps += 1;
        self.total_steps += 1;
        let failed = self.task.is_terminal(&next);
        let capped = self.episode_steps >= spec.max_episode_steps;
        let terminal = failed || capped;
        if !terminal {
            self.current = Some(next.clone());
        }
        self.last_effective_action = Some(action);
        Ok(Step {
            observation: next,
            reward,
            terminal,
            truncated: capped && !failed,
        })
    }
}

/// Task parameters as they appear in the task configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    #[serde(default)]
    pub max_episode_steps: Option<usize>,
    #[serde(default)]
    pub linear_gaussian: Option<LinearGaussianParams>,
}

impl TaskConfig {
    pub fn named(name: &str) -> Self {
        TaskConfig {
            name: name.to_string(),
            max_episode_steps: None,
            linear_gaussian: None,
        }
    }
}

/// Builds the task selected by `config.name`.
pub fn make_task(config: &TaskConfig) -> Result<Arc<dyn Task>> {
    match config.name.as_str() {
        "pendulum" => {
            let mut p = Pendulum::default();
            if let Some(h) = config.max_episode_steps {
                p = p.with_max_episode_steps(h)?;
            }
            Ok(Arc::new(p))
        }
        "linear_gaussian" => {
            let mut params = config.linear_gaussian.clone().unwrap_or_default();
            if let Some(h) = config.max_episode_steps {
                params.max_episode_steps = h;
            }
            Ok(Arc::new(LinearGaussian::new(params)?))
        }
        other => Err(Error::Config(format!("unknown task `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn step_after_terminal_is_usage_error() {
        let task = make_task(&TaskConfig {
            max_episode_steps: Some(1),
            ..TaskConfig::named("pendulum")
        })
        .unwrap();
        let mut env = RealEnv::new(task, 0);
        env.reset(&mut seeded(0));
        let s = env.step(&[0.0]).unwrap();
        assert!(s.terminal && s.truncated);
        assert!(matches!(env.step(&[0.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn wrong_action_dim_is_usage_error() {
        let task = make_task(&TaskConfig::named("pendulum")).unwrap();
        let mut env = RealEnv::new(task, 0);
        env.reset(&mut seeded(0));
        assert!(matches!(env.step(&[0.0, 1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn unknown_task_name() {
        assert!(matches!(
            make_task(&TaskConfig::named("cartpole")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn effective_action_is_clipped() {
        let task = make_task(&TaskConfig::named("pendulum")).unwrap();
        let mut env = RealEnv::new(task, 0);
        env.reset(&mut seeded(0));
        env.step(&[7.5]).unwrap();
        assert_eq!(env.last_effective_action(), Some(&[2.0][..]));
        env.step(&[-3.0]).unwrap();
        assert_eq!(env.last_effective_action(), Some(&[-2.0][..]));
    }
}
