use rand::Rng;

use super::PlanResult;
use crate::error::{Error, Result};
use crate::model::{ActionSequences, EnvironmentModel, PredictMode, TransitionModel};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShootingConfig {
    pub horizon: usize,
    pub candidates: usize,
    pub particles: usize,
}

impl ShootingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.candidates == 0 || self.particles == 0 {
            return Err(Error::Config(
                "shooting horizon, candidates and particles must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Index of the largest return; the lowest index wins ties.
pub fn best_index(returns: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &r) in returns.iter().enumerate() {
        if best.is_none_or(|b| r > returns[b]) {
            best = Some(i);
        }
    }
    best
}

/// Samples candidates uniformly within the action bounds, scores them by
/// particle rollouts and returns the best one.
pub fn random_shooting<T: TransitionModel>(
    model: &EnvironmentModel<T>,
    observation: &[f64],
    config: &ShootingConfig,
    rng: &mut SimRng,
) -> Result<PlanResult> {
    config.validate()?;
    let spec = model.spec();
    let da = spec.action_dim;
    let mut seqs = ActionSequences::zeros(config.candidates, config.horizon, da);
    for c in 0..config.candidates {
        for (i, x) in seqs.sequence_mut(c).iter_mut().enumerate() {
            let b = spec.action_bounds[i % da];
            *x = rng.gen_range(b.low..=b.high);
        }
    }
    evaluate_candidates(model, observation, &seqs, config.particles, rng)
}

/// Scores a fixed candidate set by particle rollouts and picks the best.
pub fn evaluate_candidates<T: TransitionModel>(
    model: &EnvironmentModel<T>,
    observation: &[f64],
    seqs: &ActionSequences,
    particles: usize,
    rng: &mut SimRng,
) -> Result<PlanResult> {
    let returns = model.rollout_particles(observation, seqs, particles, rng, PredictMode::Sampled)?;
    if let Some(bad) = returns.iter().find(|r| !r.is_finite()) {
        return Err(Error::NonFinite(format!("candidate return is {bad}")));
    }
    let best = best_index(&returns).expect("at least one candidate");
    Ok(PlanResult {
        best_sequence: seqs.sequence(best).to_vec(),
        best_return: returns[best],
        history: vec![returns[best]],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_task, TaskConfig};
    use crate::model::AnalyticTransition;
    use crate::rng::seeded;

    #[test]
    fn tie_rule() {
        assert_eq!(best_index(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(best_index(&[-2.0]), Some(0));
        assert_eq!(best_index(&[]), None);
    }

    #[test]
    fn sole_candidate_and_bounds() {
        let task = make_task(&TaskConfig::named("pendulum")).unwrap();
        let model = EnvironmentModel::for_task(&task, AnalyticTransition::new(task.clone()));
        let cfg = ShootingConfig {
            horizon: 4,
            candidates: 1,
            particles: 2,
        };
        let plan = random_shooting(&model, &[1.0, 0.0, 0.0], &cfg, &mut seeded(3)).unwrap();
        assert_eq!(plan.best_sequence.len(), 4);
        assert!(plan.best_sequence.iter().all(|a| (-2.0..=2.0).contains(a)));
    }
}
