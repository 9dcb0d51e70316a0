use serde::{Deserialize, Serialize};

use super::{cem_optimize, random_shooting, CemConfig, PlanResult, ShootingConfig};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::model::{EnvironmentModel, PredictMode, TransitionModel};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Cem,
    Shooting,
}

/// Planner section of an agent configuration. `population` is the candidate
/// count for both planners; the CEM-only keys are ignored by shooting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub kind: PlannerKind,
    pub horizon: usize,
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    pub alpha: f64,
    pub particles: usize,
    /// Per action dimension; a quarter of the bound width when absent.
    pub initial_std: Option<Vec<f64>>,
    pub elite_retention: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            kind: PlannerKind::Cem,
            horizon: 25,
            population: 400,
            elites: 40,
            iterations: 5,
            alpha: 0.1,
            particles: 20,
            initial_std: None,
            elite_retention: true,
        }
    }
}

impl PlannerConfig {
    pub fn shooting(&self) -> ShootingConfig {
        ShootingConfig {
            horizon: self.horizon,
            candidates: self.population,
            particles: self.particles,
        }
    }

    pub fn cem(&self, spec: &EnvSpec) -> CemConfig {
        CemConfig {
            horizon: self.horizon,
            population: self.population,
            elites: self.elites,
            iterations: self.iterations,
            alpha: self.alpha,
            initial_std: self
                .initial_std
                .clone()
                .unwrap_or_else(|| spec.action_bounds.iter().map(|b| b.width() / 4.0).collect()),
            elite_retention: self.elite_retention,
        }
    }

    pub fn validate(&self, spec: &EnvSpec) -> Result<()> {
        match self.kind {
            PlannerKind::Shooting => self.shooting().validate(),
            PlannerKind::Cem => {
                if self.particles == 0 {
                    return Err(Error::Config("planner particles must be at least 1".into()));
                }
                self.cem(spec).validate(spec.action_dim)
            }
        }
    }
}

/// Receding-horizon controller: plans from the current observation, executes
/// the first action and keeps the rest of the plan as the next warm start.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcPlanner {
    config: PlannerConfig,
    spec: EnvSpec,
    warm_start: Option<Vec<f64>>,
}

impl MpcPlanner {
    pub fn new(config: PlannerConfig, spec: EnvSpec) -> Result<Self> {
        config.validate(&spec)?;
        Ok(MpcPlanner {
            config,
            spec,
            warm_start: None,
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn warm_start(&self) -> Option<&[f64]> {
        self.warm_start.as_deref()
    }

    /// Forgets the warm start, e.g. at an episode boundary.
    pub fn reset(&mut self) {
        self.warm_start = None;
    }

    fn zero_action(&self) -> Vec<f64> {
        self.spec.clip_action(&vec![0.0; self.spec.action_dim])
    }

    /// Runs the configured planner without touching the warm start.
    pub fn plan<T: TransitionModel>(
        &self,
        model: &EnvironmentModel<T>,
        observation: &[f64],
        rng: &mut SimRng,
    ) -> Result<PlanResult> {
        self.spec.check_obs(observation)?;
        match self.config.kind {
            PlannerKind::Shooting => random_shooting(model, observation, &self.config.shooting(), rng),
            PlannerKind::Cem => {
                let init = match &self.warm_start {
                    Some(w) => w.clone(),
                    None => self.zero_action().repeat(self.config.horizon),
                };
                let particles = self.config.particles;
                // rollouts draw from their own generator so CEM sampling keeps `rng`
                let mut eval_rng = crate::rng::seeded(crate::rng::fork_seed(rng));
                let mut objective = |seqs: &crate::model::ActionSequences| {
                    model.rollout_particles(observation, seqs, particles, &mut eval_rng, PredictMode::Sampled)
                };
                let cfg = self.config.cem(&self.spec);
                cem_optimize(&mut objective, &self.spec.action_bounds, &cfg, &init, rng)
            }
        }
    }

    /// Plans, stores the shifted plan as the next warm start and returns the
    /// first action clipped to the bounds.
    pub fn act<T: TransitionModel>(
        &mut self,
        model: &EnvironmentModel<T>,
        observation: &[f64],
        rng: &mut SimRng,
    ) -> Result<Vec<f64>> {
        let plan = self.plan(model, observation, rng)?;
        Ok(self.commit(&plan.best_sequence))
    }

    /// Applies the shift rule to `sequence` and returns its first action.
    pub fn commit(&mut self, sequence: &[f64]) -> Vec<f64> {
        let da = self.spec.action_dim;
        let mut next = sequence[da..].to_vec();
        next.extend(self.zero_action());
        self.warm_start = Some(next);
        self.spec.clip_action(&sequence[..da])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_task, TaskConfig};
    use crate::model::AnalyticTransition;
    use crate::rng::seeded;

    fn pendulum_model() -> EnvironmentModel<AnalyticTransition> {
        let task = make_task(&TaskConfig::named("pendulum")).unwrap();
        EnvironmentModel::for_task(&task, AnalyticTransition::new(task.clone()))
    }

    fn small() -> PlannerConfig {
        PlannerConfig {
            horizon: 5,
            population: 30,
            elites: 5,
            iterations: 2,
            particles: 2,
            ..Default::default()
        }
    }

    #[test]
    fn shift_rule() {
        let model = pendulum_model();
        let mut mpc = MpcPlanner::new(small(), model.spec().clone()).unwrap();
        assert!(mpc.warm_start().is_none());
        let a = mpc.commit(&[0.5, -1.0, 1.5]);
        assert_eq!(a, vec![0.5]);
        assert_eq!(mpc.warm_start(), Some(&[-1.0, 1.5, 0.0][..]));
        assert_eq!(mpc.commit(&[3.0, 0.0]), vec![2.0]);
        mpc.reset();
        assert!(mpc.warm_start().is_none());
    }

    #[test]
    fn identical_seeds_identical_actions() {
        let model = pendulum_model();
        let run = || {
            let mut mpc = MpcPlanner::new(small(), model.spec().clone()).unwrap();
            let mut rng = seeded(11);
            (0..4)
                .map(|i| mpc.act(&model, &[(i as f64).cos(), (i as f64).sin(), 0.1], &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.iter().all(|u| (-2.0..=2.0).contains(&u[0])));
    }

    #[test]
    fn default_initial_std() {
        let model = pendulum_model();
        let cfg = PlannerConfig::default().cem(model.spec());
        assert_eq!(cfg.initial_std, vec![1.0]);
        assert_eq!((cfg.horizon, cfg.population, cfg.elites, cfg.iterations), (25, 400, 40, 5));
    }
}
