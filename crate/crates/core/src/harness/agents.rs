use std::sync::Arc;

use rand::Rng;

use super::config::{AgentKind, ExperimentConfig, PetsConfig};
use crate::background::{MePpoAgent, PpoLearner, TrajectoryBatch};
use crate::env::{EnvSpec, Task, Transition};
use crate::error::{Error, Result};
use crate::model::{EnsembleTransitionModel, EnvironmentModel};
use crate::nn::{Checkpoint, Matrix};
use crate::planning::{MpcPlanner, PetsAgent};
use crate::rng::SimRng;
use crate::training::ReplayBuffer;

/// Acting in evaluation mode. Holds its own per-episode state so evaluation
/// never mutates the agent.
pub trait Actor {
    fn begin_episode(&mut self);
    fn act(&mut self, observation: &[f64], rng: &mut SimRng) -> Result<Vec<f64>>;
}

/// Uniform interface the experiment loop drives for every agent type.
pub trait Agent {
    fn kind(&self) -> AgentKind;
    fn begin_episode(&mut self, observation: &[f64]) -> Result<()>;
    /// Training-mode action for the real environment.
    fn act(&mut self, observation: &[f64], rng: &mut SimRng) -> Result<Vec<f64>>;
    /// Consumes the real transition that followed the last `act`. `truncated`
    /// marks an episode cut by the step cap rather than by termination.
    fn observe(&mut self, transition: &Transition, truncated: bool, rng: &mut SimRng) -> Result<()>;
    /// Deterministic actor for evaluation.
    fn actor(&self) -> Box<dyn Actor + '_>;
    /// Mean holdout NLL of the most recent model fit, if any.
    fn model_holdout_nll(&self) -> Option<f64> {
        None
    }
    fn save(&self, ckpt: &mut Checkpoint) -> Result<()>;
    fn load(&mut self, ckpt: &Checkpoint) -> Result<()>;
    /// Rounds learned parameters to checkpoint precision so a saved agent
    /// behaves exactly like the in-memory one.
    fn round_to_checkpoint_precision(&mut self);
}

/// Builds the configured agent for `task`.
pub fn build_agent(config: &ExperimentConfig, task: &Arc<dyn Task>, rng: &mut SimRng) -> Result<Box<dyn Agent>> {
    let spec = task.spec();
    let model = || {
        config
            .model
            .clone()
            .ok_or_else(|| Error::Config(format!("agent `{}` needs a model configuration", config.agent.kind.tag())))
    };
    Ok(match config.agent.kind {
        AgentKind::Random => Box::new(RandomAgent { spec: spec.clone() }),
        AgentKind::Pets => {
            let m = model()?;
            let inner = PetsAgent::new(task, &m.ensemble, m.training, config.agent.planner.clone(), rng)?;
            Box::new(PetsRunner {
                buffer: ReplayBuffer::new(config.agent.pets.buffer_capacity),
                schedule: config.agent.pets.clone(),
                inner,
                since_train: 0,
                trained: false,
                last_nll: None,
            })
        }
        AgentKind::MePpo => {
            let m = model()?;
            let inner = MePpoAgent::new(
                task,
                &m.ensemble,
                m.training,
                config.agent.ppo.clone(),
                config.agent.me.clone(),
                rng,
            )?;
            Box::new(MePpoRunner { inner, last_nll: None })
        }
        AgentKind::PpoReal => {
            let learner = PpoLearner::new(spec.obs_dim, spec.action_dim, config.agent.ppo.clone(), rng)?;
            Box::new(PpoRealAgent::new(learner, spec.clone()))
        }
    })
}

fn uniform_action(spec: &EnvSpec, rng: &mut SimRng) -> Vec<f64> {
    spec.action_bounds.iter().map(|b| rng.gen_range(b.low..=b.high)).collect()
}

/// Uniform random actions; evaluates with the mid-bound action.
pub struct RandomAgent {
    spec: EnvSpec,
}

struct MidActor(Vec<f64>);

impl MidActor {
    fn of(spec: &EnvSpec) -> Self {
        MidActor(spec.action_bounds.iter().map(|b| b.mid()).collect())
    }
}

impl Actor for MidActor {
    fn begin_episode(&mut self) {}
    fn act(&mut self, _obs: &[f64], _rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

impl Agent for RandomAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Random
    }
    fn begin_episode(&mut self, _obs: &[f64]) -> Result<()> {
        Ok(())
    }
    fn act(&mut self, _obs: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(uniform_action(&self.spec, rng))
    }
    fn observe(&mut self, _t: &Transition, _truncated: bool, _rng: &mut SimRng) -> Result<()> {
        Ok(())
    }
    fn actor(&self) -> Box<dyn Actor + '_> {
        Box::new(MidActor::of(&self.spec))
    }
    fn save(&self, _ckpt: &mut Checkpoint) -> Result<()> {
        Ok(())
    }
    fn load(&mut self, _ckpt: &Checkpoint) -> Result<()> {
        Ok(())
    }
    fn round_to_checkpoint_precision(&mut self) {}
}

/// Model-predictive evaluation actor with a private warm start.
struct PlanningActor<'a> {
    model: &'a EnvironmentModel<EnsembleTransitionModel>,
    planner: MpcPlanner,
}

impl Actor for PlanningActor<'_> {
    fn begin_episode(&mut self) {
        self.planner.reset();
    }
    fn act(&mut self, obs: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        self.planner.act(self.model, obs, rng)
    }
}

const TRAINED_FLAG: &str = "pets/trained";

/// PETS with its data-collection schedule: random steps first, then CEM
/// planning, refitting the model every `train_every` real steps.
pub struct PetsRunner {
    pub inner: PetsAgent,
    pub buffer: ReplayBuffer,
    schedule: PetsConfig,
    since_train: usize,
    trained: bool,
    last_nll: Option<f64>,
}

impl Agent for PetsRunner {
    fn kind(&self) -> AgentKind {
        AgentKind::Pets
    }
    fn begin_episode(&mut self, _obs: &[f64]) -> Result<()> {
        self.inner.planner_mut().reset();
        Ok(())
    }
    fn act(&mut self, obs: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        if !self.trained && self.buffer.len() < self.schedule.initial_random_steps {
            return Ok(uniform_action(self.inner.model().spec(), rng));
        }
        self.inner.act(obs, rng)
    }
    fn observe(&mut self, t: &Transition, _truncated: bool, rng: &mut SimRng) -> Result<()> {
        self.buffer.add(t.clone());
        self.since_train += 1;
        let warmup_done = self.buffer.len() >= self.schedule.initial_random_steps;
        if warmup_done && (!self.trained || self.since_train >= self.schedule.train_every) && self.buffer.len() >= 5 {
            let report = self.inner.train("transition", &self.buffer, rng)?;
            log::info!(
                "pets: model refit on {} transitions, holdout nll {:.4} after {} epochs",
                self.buffer.len(),
                report.mean_holdout_nll(),
                report.epochs_run
            );
            self.last_nll = Some(report.mean_holdout_nll());
            self.since_train = 0;
            self.trained = true;
        }
        Ok(())
    }
    /// Until the first model fit there is nothing to plan with, so evaluation
    /// holds the middle of the action range.
    fn actor(&self) -> Box<dyn Actor + '_> {
        if !self.trained {
            return Box::new(MidActor::of(self.inner.model().spec()));
        }
        let mut planner = self.inner.planner().clone();
        planner.reset();
        Box::new(PlanningActor {
            model: self.inner.model(),
            planner,
        })
    }
    fn model_holdout_nll(&self) -> Option<f64> {
        self.last_nll
    }
    fn save(&self, ckpt: &mut Checkpoint) -> Result<()> {
        ckpt.insert(TRAINED_FLAG, &[1], &[if self.trained { 1.0 } else { 0.0 }])?;
        self.inner.model().transition().to_checkpoint(ckpt)
    }
    fn load(&mut self, ckpt: &Checkpoint) -> Result<()> {
        self.trained = ckpt.get_f64(TRAINED_FLAG, &[1])?[0] != 0.0;
        self.inner.model_mut().transition_mut().load_checkpoint(ckpt)
    }
    fn round_to_checkpoint_precision(&mut self) {
        self.inner.model_mut().transition_mut().round_to_checkpoint_precision();
    }
}

/// Mean action of a Gaussian policy.
struct MeanActor<'a>(&'a PpoLearner);

impl Actor for MeanActor<'_> {
    fn begin_episode(&mut self) {}
    fn act(&mut self, obs: &[f64], _rng: &mut SimRng) -> Result<Vec<f64>> {
        self.0.policy.mean(obs)
    }
}

pub struct MePpoRunner {
    pub inner: MePpoAgent,
    last_nll: Option<f64>,
}

impl Agent for MePpoRunner {
    fn kind(&self) -> AgentKind {
        AgentKind::MePpo
    }
    fn begin_episode(&mut self, obs: &[f64]) -> Result<()> {
        self.inner.begin_episode(obs)
    }
    fn act(&mut self, obs: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        self.inner.act(obs, rng)
    }
    fn observe(&mut self, t: &Transition, _truncated: bool, rng: &mut SimRng) -> Result<()> {
        if self.inner.record(t.clone()) {
            let report = self.inner.end_iteration(rng)?;
            self.last_nll = Some(report.model.mean_holdout_nll());
        }
        Ok(())
    }
    fn actor(&self) -> Box<dyn Actor + '_> {
        Box::new(MeanActor(&self.inner.learner))
    }
    fn model_holdout_nll(&self) -> Option<f64> {
        self.last_nll
    }
    fn save(&self, ckpt: &mut Checkpoint) -> Result<()> {
        self.inner.model.transition().to_checkpoint(ckpt)?;
        self.inner.learner.to_checkpoint(ckpt)
    }
    fn load(&mut self, ckpt: &Checkpoint) -> Result<()> {
        self.inner.model.transition_mut().load_checkpoint(ckpt)?;
        self.inner.learner.load_checkpoint(ckpt)
    }
    fn round_to_checkpoint_precision(&mut self) {
        self.inner.model.transition_mut().round_to_checkpoint_precision();
        self.inner.learner.round_to_checkpoint_precision();
    }
}

/// PPO trained directly on real transitions.
pub struct PpoRealAgent {
    pub learner: PpoLearner,
    spec: EnvSpec,
    pending: Option<(Vec<f64>, Vec<f64>, f64, f64)>,
    obs: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    terminals: Vec<bool>,
    boundaries: Vec<bool>,
    truncation_values: Vec<f64>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
}

impl PpoRealAgent {
    pub fn new(learner: PpoLearner, spec: EnvSpec) -> Self {
        PpoRealAgent {
            learner,
            spec,
            pending: None,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminals: Vec::new(),
            boundaries: Vec::new(),
            truncation_values: Vec::new(),
            log_probs: Vec::new(),
            values: Vec::new(),
        }
    }

    fn take_batch(&mut self, bootstrap_value: f64) -> Result<TrajectoryBatch> {
        let n = self.rewards.len();
        let obs = std::mem::take(&mut self.obs);
        let actions = std::mem::take(&mut self.actions);
        Ok(TrajectoryBatch {
            observations: Matrix::from_vec(n, self.spec.obs_dim, obs.concat())?,
            actions: Matrix::from_vec(n, self.spec.action_dim, actions.concat())?,
            rewards: std::mem::take(&mut self.rewards),
            terminals: std::mem::take(&mut self.terminals),
            boundaries: std::mem::take(&mut self.boundaries),
            truncation_values: std::mem::take(&mut self.truncation_values),
            log_probs: std::mem::take(&mut self.log_probs),
            values: std::mem::take(&mut self.values),
            bootstrap_value,
            advantages: None,
            returns: None,
        })
    }
}

impl Agent for PpoRealAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::PpoReal
    }
    fn begin_episode(&mut self, _obs: &[f64]) -> Result<()> {
        Ok(())
    }
    fn act(&mut self, obs: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        let (action, lp) = self.learner.policy.sample(obs, rng)?;
        let v = self.learner.value.value(obs)?;
        self.pending = Some((obs.to_vec(), action.clone(), lp, v));
        Ok(action)
    }
    fn observe(&mut self, t: &Transition, truncated: bool, rng: &mut SimRng) -> Result<()> {
        let (obs, action, lp, v) = self
            .pending
            .take()
            .ok_or_else(|| Error::Usage("observe called without a preceding act".into()))?;
        let boundary = t.terminal || truncated;
        let full = self.rewards.len() + 1 >= self.learner.config.rollout_steps;
        let next_value = if !t.terminal && (truncated || full) {
            self.learner.value.value(&t.next_state)?
        } else {
            0.0
        };
        self.obs.push(obs);
        self.actions.push(action);
        self.rewards.push(t.reward);
        self.terminals.push(t.terminal);
        self.boundaries.push(boundary);
        self.truncation_values.push(if truncated && !t.terminal { next_value } else { 0.0 });
        self.log_probs.push(lp);
        self.values.push(v);
        if full {
            let bootstrap = if boundary { 0.0 } else { next_value };
            let mut batch = self.take_batch(bootstrap)?;
            let d = self.learner.update(&mut batch, rng)?;
            log::info!("ppo_real update: entropy {:.4}, approx kl {:.5}", d.entropy, d.approx_kl);
        }
        Ok(())
    }
    fn actor(&self) -> Box<dyn Actor + '_> {
        Box::new(MeanActor(&self.learner))
    }
    fn save(&self, ckpt: &mut Checkpoint) -> Result<()> {
        self.learner.to_checkpoint(ckpt)
    }
    fn load(&mut self, ckpt: &Checkpoint) -> Result<()> {
        self.learner.load_checkpoint(ckpt)
    }
    fn round_to_checkpoint_precision(&mut self) {
        self.learner.round_to_checkpoint_precision();
    }
}
