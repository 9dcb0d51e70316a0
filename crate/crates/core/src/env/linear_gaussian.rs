use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Bound, EnvSpec, Task};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// `-‖s‖² - 0.1·‖a‖²`
pub fn linear_gaussian_reward(state: &[f64], action: &[f64]) -> f64 {
    let s2: f64 = state.iter().map(|x| x * x).sum();
    let a2: f64 = action.iter().map(|x| x * x).sum();
    -s2 - 0.1 * a2
}

fn default_dim() -> usize {
    2
}
fn default_noise() -> f64 {
    0.01
}
fn default_bound() -> f64 {
    1.0
}
fn default_horizon() -> usize {
    50
}
fn default_radius() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearGaussianParams {
    #[serde(default = "default_dim")]
    pub state_dim: usize,
    #[serde(default = "default_dim")]
    pub action_dim: usize,
    /// Row-major `state_dim × state_dim`; identity when absent.
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
    /// Row-major `state_dim × action_dim`; identity when absent.
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default = "default_bound")]
    pub action_bound: f64,
    #[serde(default = "default_horizon")]
    pub max_episode_steps: usize,
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    #[serde(default = "default_radius")]
    pub termination_radius: f64,
}

impl Default for LinearGaussianParams {
    fn default() -> Self {
        LinearGaussianParams {
            state_dim: default_dim(),
            action_dim: default_dim(),
            a: None,
            b: None,
            noise_std: default_noise(),
            action_bound: default_bound(),
            max_episode_steps: default_horizon(),
            initial_state: None,
            termination_radius: default_radius(),
        }
    }
}

/// `s' = A·s + B·a + ε`, `ε ~ N(0, σ²I)`. Observations are the raw state.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    spec: EnvSpec,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    noise_std: f64,
    initial: Vec<f64>,
    radius: f64,
}

fn identity(rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|i| (0..cols).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn check_matrix(name: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!(
            "linear_gaussian.{name} must be {rows}×{cols}"
        )));
    }
    Ok(())
}

impl LinearGaussian {
    pub fn new(params: LinearGaussianParams) -> Result<Self> {
        let ds = params.state_dim;
        let da = params.action_dim;
        if !(params.noise_std >= 0.0) || !(params.action_bound > 0.0) {
            return Err(Error::Config(
                "linear_gaussian needs noise_std ≥ 0 and action_bound > 0".into(),
            ));
        }
        let a = params.a.clone().unwrap_or_else(|| identity(ds, ds));
        let b = params.b.clone().unwrap_or_else(|| identity(ds, da));
        check_matrix("a", &a, ds, ds)?;
        check_matrix("b", &b, ds, da)?;
        let initial = params.initial_state.clone().unwrap_or_else(|| vec![0.0; ds]);
        if initial.len() != ds {
            return Err(Error::dims("linear_gaussian.initial_state", ds, initial.len()));
        }
        let bounds = vec![Bound::new(-params.action_bound, params.action_bound); da];
        Ok(LinearGaussian {
            spec: EnvSpec::new(ds, bounds, params.max_episode_steps)?,
            a,
            b,
            noise_std: params.noise_std,
            initial,
            radius: params.termination_radius,
        })
    }

    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[Vec<f64>] {
        &self.b
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Noise-free part of the dynamics.
    pub fn mean_next(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(ar, br)| {
                let sa: f64 = ar.iter().zip(state).map(|(x, y)| x * y).sum();
                let sb: f64 = br.iter().zip(action).map(|(x, y)| x * y).sum();
                sa + sb
            })
            .collect()
    }
}

impl Task for LinearGaussian {
    fn name(&self) -> &str {
        "linear_gaussian"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn sample_initial(&self, _rng: &mut SimRng) -> Vec<f64> {
        self.initial.clone()
    }

    fn transition(&self, obs: &[f64], action: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let mut next = self.mean_next(obs, action);
        if self.noise_std > 0.0 {
            for x in &mut next {
                let z: f64 = StandardNormal.sample(rng);
                *x += self.noise_std * z;
            }
        }
        next
    }

    fn expected_transition(&self, obs: &[f64], action: &[f64]) -> Vec<f64> {
        self.mean_next(obs, action)
    }

    fn reward(&self, obs: &[f64], action: &[f64]) -> f64 {
        linear_gaussian_reward(obs, action)
    }

    fn is_terminal(&self, next_obs: &[f64]) -> bool {
        next_obs.iter().map(|x| x * x).sum::<f64>().sqrt() > self.radius
    }
}
