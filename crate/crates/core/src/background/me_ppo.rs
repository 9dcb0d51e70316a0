use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ppo::{PpoConfig, PpoDiagnostics, PpoLearner};
use super::rollout::collect_virtual_rollouts;
use crate::env::{Environment, RealEnv, Task, Transition};
use crate::error::{Error, Result};
use crate::model::{EnsembleConfig, EnsembleTransitionModel, EnvironmentModel};
use crate::planning::Component;
use crate::rng::SimRng;
use crate::training::{train_ensemble, ReplayBuffer, TrainConfig, TrainReport};

/// Outer-loop settings of the model-ensemble PPO agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeConfig {
    pub real_steps_per_iter: usize,
    pub virtual_steps_per_iter: usize,
    pub ppo_updates_per_iter: usize,
    pub virtual_horizon: usize,
    pub buffer_capacity: usize,
}

impl Default for MeConfig {
    fn default() -> Self {
        MeConfig {
            real_steps_per_iter: 1000,
            virtual_steps_per_iter: 4000,
            ppo_updates_per_iter: 10,
            virtual_horizon: 100,
            buffer_capacity: 1_000_000,
        }
    }
}

impl MeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.virtual_steps_per_iter == 0 || self.virtual_horizon == 0 || self.buffer_capacity == 0 {
            return Err(Error::Config(
                "me.virtual_steps_per_iter, me.virtual_horizon and me.buffer_capacity must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// What one outer iteration did.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub real_steps: usize,
    pub model: TrainReport,
    pub ppo: Vec<PpoDiagnostics>,
}

/// Background planner: a PPO learner trained only on rollouts inside a
/// learned ensemble model, which is itself fit to real transitions.
#[derive(Debug, Clone)]
pub struct MePpoAgent {
    pub model: EnvironmentModel<EnsembleTransitionModel>,
    pub learner: PpoLearner,
    pub buffer: ReplayBuffer,
    pub train_config: TrainConfig,
    pub config: MeConfig,
    pending_real: usize,
}

impl MePpoAgent {
    pub fn new(
        task: &Arc<dyn Task>,
        ensemble: &EnsembleConfig,
        train_config: TrainConfig,
        ppo: PpoConfig,
        config: MeConfig,
        rng: &mut SimRng,
    ) -> Result<Self> {
        train_config.validate()?;
        config.validate()?;
        let spec = task.spec();
        let transition = EnsembleTransitionModel::new(spec.obs_dim, spec.action_dim, ensemble, rng)?;
        let learner = PpoLearner::new(spec.obs_dim, spec.action_dim, ppo, rng)?;
        Ok(MePpoAgent {
            model: EnvironmentModel::for_task(task, transition),
            learner,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            train_config,
            config,
            pending_real: 0,
        })
    }

    /// Stochastic policy action used for real data collection.
    pub fn act(&self, observation: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(self.learner.policy.sample(observation, rng)?.0)
    }

    /// Records the first observation of a real episode as a virtual start state.
    pub fn begin_episode(&mut self, observation: &[f64]) -> Result<()> {
        self.model.add_initial_state(observation.to_vec())
    }

    /// Stores a real transition. Returns true once an iteration's worth of
    /// real data has been gathered since the last [`Self::end_iteration`].
    pub fn record(&mut self, transition: Transition) -> bool {
        self.buffer.add(transition);
        self.pending_real += 1;
        self.pending_real >= self.config.real_steps_per_iter
    }

    pub fn train(&mut self, component: &str, rng: &mut SimRng) -> Result<TrainReport> {
        match component.parse::<Component>()? {
            Component::Transition => {
                train_ensemble(self.model.transition_mut(), &self.buffer, &self.train_config, rng)
            }
            other => Err(Error::UnsupportedComponent(other.tag().to_string())),
        }
    }

    /// Runs the configured number of virtual-rollout PPO updates.
    pub fn improve_policy(&mut self, rng: &mut SimRng) -> Result<Vec<PpoDiagnostics>> {
        let mut out = Vec::with_capacity(self.config.ppo_updates_per_iter);
        for _ in 0..self.config.ppo_updates_per_iter {
            let mut batch = collect_virtual_rollouts(
                &self.learner.policy,
                &self.learner.value,
                &self.model,
                self.config.virtual_steps_per_iter,
                self.config.virtual_horizon,
                rng,
            )?;
            out.push(self.learner.update(&mut batch, rng)?);
        }
        Ok(out)
    }

    /// Model fitting followed by policy improvement.
    pub fn end_iteration(&mut self, rng: &mut SimRng) -> Result<IterationReport> {
        let real_steps = std::mem::take(&mut self.pending_real);
        let model = self.train("transition", rng)?;
        let ppo = self.improve_policy(rng)?;
        log::info!(
            "me_ppo iteration: {} real steps, holdout nll {:.4}, entropy {:.4}",
            real_steps,
            model.mean_holdout_nll(),
            ppo.last().map_or(f64::NAN, |d| d.entropy)
        );
        Ok(IterationReport { real_steps, model, ppo })
    }
}

/// One outer iteration against a real environment: collect
/// `real_steps_per_iter` transitions with the current policy, refit the
/// model, then improve the policy on virtual rollouts.
pub fn me_ppo_train_iteration(agent: &mut MePpoAgent, env: &mut RealEnv, rng: &mut SimRng) -> Result<IterationReport> {
    for _ in 0..agent.config.real_steps_per_iter {
        let obs = match env.observation() {
            Some(o) => o.to_vec(),
            None => {
                let o = env.reset(rng);
                agent.begin_episode(&o)?;
                o
            }
        };
        let action = agent.act(&obs, rng)?;
        let step = env.step(&action)?;
        let effective = env.last_effective_action().expect("a step was taken").to_vec();
        agent.record(Transition {
            state: obs,
            action: effective,
            reward: step.reward,
            next_state: step.observation,
            terminal: step.terminal && !step.truncated,
        });
    }
    agent.end_iteration(rng)
}
