use std::f64::consts::PI;

use rand::Rng;

use super::{Bound, EnvSpec, Task};
use crate::error::Result;
use crate::rng::SimRng;

const GRAVITY: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;
const DT: f64 = 0.05;
const MAX_TORQUE: f64 = 2.0;
const MAX_SPEED: f64 = 8.0;

/// Wraps an angle into `[-π, π)`.
pub fn angle_normalize(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Swing-up cost, negated: `-(θ² + 0.1·θ'² + 0.001·u²)` with θ wrapped.
pub fn pendulum_reward(theta: f64, theta_dot: f64, torque: f64) -> f64 {
    let th = angle_normalize(theta);
    -(th * th + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque)
}

/// Pendulum swing-up. Observations are `[cos θ, sin θ, θ']`; θ = 0 is upright.
///
/// The dynamics read θ back from the observation, so the task is a pure
/// function of observations and a learned model can reproduce it exactly.
#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
}

impl Default for Pendulum {
    fn default() -> Self {
        Pendulum {
            spec: EnvSpec {
                obs_dim: 3,
                action_dim: 1,
                action_bounds: vec![Bound::new(-MAX_TORQUE, MAX_TORQUE)],
                max_episode_steps: 200,
            },
        }
    }
}

impl Pendulum {
    pub fn with_max_episode_steps(mut self, steps: usize) -> Result<Self> {
        self.spec = EnvSpec::new(3, self.spec.action_bounds.clone(), steps)?;
        Ok(self)
    }

    pub fn observation(theta: f64, theta_dot: f64) -> Vec<f64> {
        vec![theta.cos(), theta.sin(), theta_dot]
    }

    /// Recovers `(θ, θ')` from an observation.
    pub fn state_of(obs: &[f64]) -> (f64, f64) {
        (obs[1].atan2(obs[0]), obs[2])
    }

    /// One semi-implicit Euler step: velocity first, then angle.
    pub fn integrate(theta: f64, theta_dot: f64, torque: f64) -> (f64, f64) {
        let u = torque.clamp(-MAX_TORQUE, MAX_TORQUE);
        let acc = 3.0 * GRAVITY / (2.0 * LENGTH) * theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
        let new_dot = (theta_dot + acc * DT).clamp(-MAX_SPEED, MAX_SPEED);
        (theta + new_dot * DT, new_dot)
    }
}

impl Task for Pendulum {
    fn name(&self) -> &str {
        "pendulum"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn sample_initial(&self, rng: &mut SimRng) -> Vec<f64> {
        let theta = rng.gen_range(-PI..PI);
        let theta_dot = rng.gen_range(-1.0..1.0);
        Self::observation(theta, theta_dot)
    }

    fn transition(&self, obs: &[f64], action: &[f64], _rng: &mut SimRng) -> Vec<f64> {
        self.expected_transition(obs, action)
    }

    fn expected_transition(&self, obs: &[f64], action: &[f64]) -> Vec<f64> {
        let (th, thd) = Self::state_of(obs);
        let (th, thd) = Self::integrate(th, thd, action[0]);
        Self::observation(th, thd)
    }

    fn reward(&self, obs: &[f64], action: &[f64]) -> f64 {
        let (th, thd) = Self::state_of(obs);
        pendulum_reward(th, thd, action[0])
    }

    fn is_terminal(&self, _next_obs: &[f64]) -> bool {
        false
    }
}
