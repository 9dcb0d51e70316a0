use rand_distr::{Distribution, StandardNormal};

use super::PlanResult;
use crate::env::Bound;
use crate::error::{Error, Result};
use crate::model::ActionSequences;
use crate::rng::SimRng;

/// Lower limit applied to the elite standard deviation.
const STD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CemConfig {
    pub horizon: usize,
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    /// Weight kept on the previous distribution at each update.
    pub alpha: f64,
    /// Per action dimension, shared across the horizon.
    pub initial_std: Vec<f64>,
    /// Re-evaluate the previous elites alongside each new population.
    pub elite_retention: bool,
}

impl CemConfig {
    pub fn validate(&self, action_dim: usize) -> Result<()> {
        if self.horizon == 0 || self.population == 0 || self.iterations == 0 {
            return Err(Error::Config("CEM horizon, population and iterations must be at least 1".into()));
        }
        if self.elites == 0 || self.elites > self.population {
            return Err(Error::Config(format!(
                "CEM elites {} must lie in 1..={}",
                self.elites, self.population
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("CEM alpha {} must lie in [0, 1]", self.alpha)));
        }
        if self.initial_std.len() != action_dim || self.initial_std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config(format!(
                "CEM initial_std needs {action_dim} positive entries"
            )));
        }
        Ok(())
    }
}

/// Cross-entropy method over flattened `horizon × action_dim` sequences.
///
/// `objective` scores a batch of candidate sequences. Samples are clipped to
/// `bounds`; the final mean is returned as the plan.
pub fn cem_optimize(
    objective: &mut dyn FnMut(&ActionSequences) -> Result<Vec<f64>>,
    bounds: &[Bound],
    config: &CemConfig,
    init_mean: &[f64],
    rng: &mut SimRng,
) -> Result<PlanResult> {
    let da = bounds.len();
    config.validate(da)?;
    let h = config.horizon;
    let len = h * da;
    if init_mean.len() != len {
        return Err(Error::dims("CEM initial mean", len, init_mean.len()));
    }
    if init_mean.iter().enumerate().any(|(i, &m)| !(m >= bounds[i % da].low && m <= bounds[i % da].high)) {
        return Err(Error::Usage("CEM initial mean lies outside the action bounds".into()));
    }
    let mut mean = init_mean.to_vec();
    let mut std: Vec<f64> = (0..len).map(|i| config.initial_std[i % da]).collect();
    let mut retained: Vec<Vec<f64>> = Vec::new();
    let mut history = Vec::with_capacity(config.iterations);
    let k = config.elites;

    for _ in 0..config.iterations {
        let count = config.population + retained.len();
        let mut pop = ActionSequences::zeros(count, h, da);
        for c in 0..config.population {
            for (i, x) in pop.sequence_mut(c).iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                *x = bounds[i % da].clip(mean[i] + std[i] * z);
            }
        }
        for (j, e) in retained.iter().enumerate() {
            pop.sequence_mut(config.population + j).copy_from_slice(e);
        }
        let returns = objective(&pop)?;
        if returns.len() != count {
            return Err(Error::dims("CEM objective output", count, returns.len()));
        }
        if let Some((i, r)) = returns.iter().enumerate().find(|(_, r)| !r.is_finite()) {
            return Err(Error::NonFinite(format!("CEM objective returned {r} for candidate {i}")));
        }
        let mut order: Vec<usize> = (0..count).collect();
        order.sort_by(|&a, &b| returns[b].total_cmp(&returns[a]));
        let elites = &order[..k];
        history.push(returns[elites[0]]);

        for i in 0..len {
            let m = elites.iter().map(|&e| pop.sequence(e)[i]).sum::<f64>() / k as f64;
            let v = elites
                .iter()
                .map(|&e| (pop.sequence(e)[i] - m).powi(2))
                .sum::<f64>()
                / k as f64;
            mean[i] = config.alpha * mean[i] + (1.0 - config.alpha) * m;
            std[i] = config.alpha * std[i] + (1.0 - config.alpha) * v.sqrt().max(STD_FLOOR);
        }
        if config.elite_retention {
            retained = elites.iter().map(|&e| pop.sequence(e).to_vec()).collect();
        }
    }
    Ok(PlanResult {
        best_sequence: mean,
        best_return: *history.last().expect("at least one iteration"),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn quad(target: f64) -> impl FnMut(&ActionSequences) -> Result<Vec<f64>> {
        move |s: &ActionSequences| Ok((0..s.count).map(|c| -(s.sequence(c)[0] - target).powi(2)).collect())
    }

    fn cfg(alpha: f64) -> CemConfig {
        CemConfig {
            horizon: 1,
            population: 100,
            elites: 10,
            iterations: 10,
            alpha,
            initial_std: vec![2.5],
            elite_retention: true,
        }
    }

    #[test]
    fn finds_quadratic_optimum() {
        let plan = cem_optimize(&mut quad(3.0), &[Bound::new(-5.0, 5.0)], &cfg(0.0), &[0.0], &mut seeded(0)).unwrap();
        assert!((plan.best_sequence[0] - 3.0).abs() < 1e-2, "{:?}", plan.best_sequence);
    }

    #[test]
    fn alpha_one_freezes_distribution() {
        let mut seen: Vec<f64> = Vec::new();
        let mut obj = |s: &ActionSequences| {
            let v: Vec<f64> = (0..s.count).map(|c| s.sequence(c)[0]).collect();
            seen.extend(&v[..100]);
            Ok(v.iter().map(|x| -(x - 3.0).powi(2)).collect())
        };
        let plan = cem_optimize(&mut obj, &[Bound::new(-50.0, 50.0)], &cfg(1.0), &[0.0], &mut seeded(1)).unwrap();
        assert_eq!(plan.best_sequence, vec![0.0]);
        // every population is still drawn around 0 with std 2.5
        let last = &seen[900..];
        let m = last.iter().sum::<f64>() / 100.0;
        assert!(m.abs() < 1.0);
    }

    #[test]
    fn full_elite_set_matches_population_statistics() {
        let mut c = cfg(0.0);
        c.elites = 100;
        c.iterations = 1;
        c.elite_retention = false;
        let mut batch = Vec::new();
        let mut obj = |s: &ActionSequences| {
            batch = (0..s.count).map(|i| s.sequence(i)[0]).collect();
            Ok(vec![0.0; s.count])
        };
        let plan = cem_optimize(&mut obj, &[Bound::new(-5.0, 5.0)], &c, &[0.0], &mut seeded(2)).unwrap();
        let m = batch.iter().sum::<f64>() / 100.0;
        assert!((plan.best_sequence[0] - m).abs() < 1e-12);
    }

    #[test]
    fn non_finite_objective_aborts() {
        let mut obj = |s: &ActionSequences| Ok(vec![f64::NAN; s.count]);
        let r = cem_optimize(&mut obj, &[Bound::new(-1.0, 1.0)], &cfg(0.0), &[0.0], &mut seeded(0));
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = cfg(0.0);
        c.elites = 101;
        assert!(cem_optimize(&mut quad(0.0), &[Bound::new(-1.0, 1.0)], &c, &[0.0], &mut seeded(0)).is_err());
        let r = cem_optimize(&mut quad(0.0), &[Bound::new(-1.0, 1.0)], &cfg(0.0), &[2.0], &mut seeded(0));
        assert!(matches!(r, Err(Error::Usage(_))));
    }
}
