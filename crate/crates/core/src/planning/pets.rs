use std::str::FromStr;
use std::sync::Arc;

use super::{MpcPlanner, PlannerConfig};
use crate::env::Task;
use crate::error::{Error, Result};
use crate::model::{EnsembleConfig, EnsembleTransitionModel, EnvironmentModel};
use crate::rng::SimRng;
use crate::training::{train_ensemble, ReplayBuffer, TrainConfig, TrainReport};

/// Parts of an environment model that a `train` call can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Transition,
    Reward,
    Termination,
    InitialState,
}

impl Component {
    pub fn tag(self) -> &'static str {
        match self {
            Component::Transition => "transition",
            Component::Reward => "reward",
            Component::Termination => "termination",
            Component::InitialState => "initial_state",
        }
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transition" => Ok(Component::Transition),
            "reward" => Ok(Component::Reward),
            "termination" => Ok(Component::Termination),
            "initial_state" => Ok(Component::InitialState),
            other => Err(Error::Usage(format!("unknown model component `{other}`"))),
        }
    }
}

/// Probabilistic-ensemble model with CEM model-predictive control.
#[derive(Debug, Clone)]
pub struct PetsAgent {
    model: EnvironmentModel<EnsembleTransitionModel>,
    planner: MpcPlanner,
    train_config: TrainConfig,
}

impl PetsAgent {
    pub fn new(
        task: &Arc<dyn Task>,
        ensemble: &EnsembleConfig,
        train_config: TrainConfig,
        planner: PlannerConfig,
        rng: &mut SimRng,
    ) -> Result<Self> {
        train_config.validate()?;
        let spec = task.spec();
        let transition = EnsembleTransitionModel::new(spec.obs_dim, spec.action_dim, ensemble, rng)?;
        Ok(PetsAgent {
            model: EnvironmentModel::for_task(task, transition),
            planner: MpcPlanner::new(planner, spec.clone())?,
            train_config,
        })
    }

    pub fn model(&self) -> &EnvironmentModel<EnsembleTransitionModel> {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut EnvironmentModel<EnsembleTransitionModel> {
        &mut self.model
    }

    pub fn planner(&self) -> &MpcPlanner {
        &self.planner
    }

    pub fn planner_mut(&mut self) -> &mut MpcPlanner {
        &mut self.planner
    }

    pub fn act(&mut self, observation: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        self.planner.act(&self.model, observation, rng)
    }

    /// Trains the named component. Only the transition component is learned;
    /// reward and termination are analytic.
    pub fn train(&mut self, component: &str, buffer: &ReplayBuffer, rng: &mut SimRng) -> Result<TrainReport> {
        self.train_component(component.parse()?, buffer, rng)
    }

    pub fn train_component(
        &mut self,
        component: Component,
        buffer: &ReplayBuffer,
        rng: &mut SimRng,
    ) -> Result<TrainReport> {
        match component {
            Component::Transition => train_ensemble(self.model.transition_mut(), buffer, &self.train_config, rng),
            other => Err(Error::UnsupportedComponent(other.tag().to_string())),
        }
    }
}
