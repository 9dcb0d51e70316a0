use std::sync::Arc;

use rand::Rng;

use super::ensemble::EnsembleTransitionModel;
use super::{PredictMode, TransitionModel};
use crate::env::{EnvSpec, Environment, Step, Task};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{self, SimRng};

pub type RewardFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type TerminationFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// `count` action sequences of `horizon` steps, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSequences {
    pub count: usize,
    pub horizon: usize,
    pub action_dim: usize,
    pub data: Vec<f64>,
}

impl ActionSequences {
    pub fn zeros(count: usize, horizon: usize, action_dim: usize) -> Self {
        ActionSequences {
            count,
            horizon,
            action_dim,
            data: vec![0.0; count * horizon * action_dim],
        }
    }

    pub fn from_sequences(sequences: &[Vec<f64>], horizon: usize, action_dim: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(sequences.len() * horizon * action_dim);
        for s in sequences {
            if s.len() != horizon * action_dim {
                return Err(Error::dims("action sequence", horizon * action_dim, s.len()));
            }
            data.extend_from_slice(s);
        }
        Ok(ActionSequences {
            count: sequences.len(),
            horizon,
            action_dim,
            data,
        })
    }

    pub fn sequence(&self, c: usize) -> &[f64] {
        let len = self.horizon * self.action_dim;
        &self.data[c * len..(c + 1) * len]
    }

    pub fn sequence_mut(&mut self, c: usize) -> &mut [f64] {
        let len = self.horizon * self.action_dim;
        &mut self.data[c * len..(c + 1) * len]
    }

    pub fn action(&self, c: usize, t: usize) -> &[f64] {
        let start = (c * self.horizon + t) * self.action_dim;
        &self.data[start..start + self.action_dim]
    }
}

/// A virtual environment assembled from an initial-state sampler, a
/// transition model and the task's analytic reward and termination functions.
#[derive(Clone)]
pub struct EnvironmentModel<T = EnsembleTransitionModel> {
    spec: EnvSpec,
    initial_states: Vec<Vec<f64>>,
    transition: T,
    reward_fn: RewardFn,
    termination_fn: TerminationFn,
}

impl<T> std::fmt::Debug for EnvironmentModel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnvironmentModel")
            .field("spec", &self.spec)
            .field("initial_states", &self.initial_states.len())
            .finish_non_exhaustive()
    }
}

impl<T: TransitionModel> EnvironmentModel<T> {
    pub fn new(spec: EnvSpec, transition: T, reward_fn: RewardFn, termination_fn: TerminationFn) -> Self {
        EnvironmentModel {
            spec,
            initial_states: Vec::new(),
            transition,
            reward_fn,
            termination_fn,
        }
    }

    /// Uses `task`'s spec, reward and termination functions.
    pub fn for_task(task: &Arc<dyn Task>, transition: T) -> Self {
        let r = task.clone();
        let t = task.clone();
        Self::new(
            task.spec().clone(),
            transition,
            Arc::new(move |o, a| r.reward(o, a)),
            Arc::new(move |o| t.is_terminal(o)),
        )
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn transition(&self) -> &T {
        &self.transition
    }

    pub fn transition_mut(&mut self) -> &mut T {
        &mut self.transition
    }

    pub fn reward(&self, obs: &[f64], action: &[f64]) -> f64 {
        (self.reward_fn)(obs, action)
    }

    pub fn is_terminal(&self, next_obs: &[f64]) -> bool {
        (self.termination_fn)(next_obs)
    }

    pub fn initial_states(&self) -> &[Vec<f64>] {
        &self.initial_states
    }

    /// Records a real initial observation for the initial-state sampler.
    pub fn add_initial_state(&mut self, obs: Vec<f64>) -> Result<()> {
        self.spec.check_obs(&obs)?;
        self.initial_states.push(obs);
        Ok(())
    }

    pub fn virtual_reset(&self, rng: &mut SimRng) -> Result<Vec<f64>> {
        if self.initial_states.is_empty() {
            return Err(Error::Config(
                "environment model has no recorded initial states".into(),
            ));
        }
        let i = rng.gen_range(0..self.initial_states.len());
        Ok(self.initial_states[i].clone())
    }

    /// One virtual step with a uniformly drawn member and sampled dynamics.
    /// `terminal` reflects the termination function only; step caps are the
    /// caller's business (see [`VirtualEnv`]).
    pub fn virtual_step(&self, obs: &[f64], action: &[f64], rng: &mut SimRng) -> Result<Step> {
        let member = EnsembleTransitionModel::sample_member(self.transition.num_members(), rng);
        self.step_with_member(member, obs, action, rng, PredictMode::Sampled)
    }

    pub fn step_with_member(
        &self,
        member: usize,
        obs: &[f64],
        action: &[f64],
        rng: &mut SimRng,
        mode: PredictMode,
    ) -> Result<Step> {
        self.spec.check_obs(obs)?;
        self.spec.check_action(action)?;
        let action = self.spec.clip_action(action);
        let reward = self.reward(obs, &action);
        let next = self.transition.predict(member, obs, &action, rng, mode)?;
        let terminal = self.is_terminal(&next);
        Ok(Step {
            observation: next,
            reward,
            terminal,
            truncated: false,
        })
    }

    /// Mean undiscounted return of each candidate sequence over `particles`
    /// rollouts from `start`.
    ///
    /// Particle `p` of candidate `c` draws its member and noise from stream
    /// `c·P + p` of a base seed taken from `rng`, and keeps its member for the
    /// whole horizon. A particle stops accumulating reward once terminal.
    pub fn rollout_particles(
        &self,
        start: &[f64],
        sequences: &ActionSequences,
        particles: usize,
        rng: &mut SimRng,
        mode: PredictMode,
    ) -> Result<Vec<f64>> {
        let seed = rng::fork_seed(rng);
        self.rollout_particles_seeded(start, sequences, particles, seed, mode)
    }

    pub fn rollout_particles_seeded(
        &self,
        start: &[f64],
        sequences: &ActionSequences,
        particles: usize,
        seed: u64,
        mode: PredictMode,
    ) -> Result<Vec<f64>> {
        self.spec.check_obs(start)?;
        if sequences.count == 0 || sequences.horizon == 0 || particles == 0 {
            return Err(Error::Usage(
                "rollout needs at least one candidate, one step and one particle".into(),
            ));
        }
        if sequences.action_dim != self.spec.action_dim {
            return Err(Error::dims("action sequence", self.spec.action_dim, sequences.action_dim));
        }
        let n = sequences.count * particles;
        let d = self.spec.obs_dim;
        let da = self.spec.action_dim;
        let e = self.transition.num_members();
        let mut rngs: Vec<SimRng> = (0..n as u64).map(|i| rng::stream(seed, i)).collect();
        let members: Vec<usize> = rngs
            .iter_mut()
            .map(|r| EnsembleTransitionModel::sample_member(e, r))
            .collect();
        let mut obs = Matrix::from_vec(n, d, start.repeat(n))?;
        let mut actions = Matrix::zeros(n, da);
        let mut returns = vec![0.0; n];
        let mut alive = vec![true; n];
        for t in 0..sequences.horizon {
            for i in 0..n {
                let a = sequences.action(i / particles, t);
                let row = actions.row_mut(i);
                for (k, (dst, b)) in row.iter_mut().zip(&self.spec.action_bounds).enumerate() {
                    *dst = b.clip(a[k]);
                }
                if alive[i] {
                    returns[i] += self.reward(obs.row(i), actions.row(i));
                }
            }
            let next = self.transition.predict_batch(&members, &obs, &actions, &mut rngs, mode)?;
            for (i, live) in alive.iter_mut().enumerate() {
                if *live && self.is_terminal(next.row(i)) {
                    *live = false;
                }
            }
            obs = next;
        }
        // running mean keeps identical particles bit-identical to one particle
        Ok(returns
            .chunks(particles)
            .map(|ps| {
                ps.iter()
                    .enumerate()
                    .fold(0.0, |m, (k, &x)| m + (x - m) / (k + 1) as f64)
            })
            .collect())
    }

    /// A stateful environment backed by this model.
    pub fn env(&self, seed: u64) -> VirtualEnv<'_, T> {
        VirtualEnv {
            model: self,
            rng: rng::seeded(seed),
            current: None,
            steps: 0,
        }
    }
}

/// Stateful view of an [`EnvironmentModel`] with the same reset/step contract
/// as a real environment.
pub struct VirtualEnv<'a, T> {
    model: &'a EnvironmentModel<T>,
    rng: SimRng,
    current: Option<Vec<f64>>,
    steps: usize,
}

impl<T: TransitionModel> VirtualEnv<'_, T> {
    /// Resets from the model's initial-state sampler.
    pub fn try_reset(&mut self, rng: &mut SimRng) -> Result<Vec<f64>> {
        let obs = self.model.virtual_reset(rng)?;
        self.current = Some(obs.clone());
        self.steps = 0;
        Ok(obs)
    }
}

impl<T: TransitionModel> Environment for VirtualEnv<'_, T> {
    fn spec(&self) -> &EnvSpec {
        &self.model.spec
    }

    /// Panics if the model has no recorded initial states; use
    /// [`VirtualEnv::try_reset`] to handle that case.
    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        self.try_reset(rng)
            .expect("virtual reset needs at least one recorded initial state")
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let obs = self
            .current
            .take()
            .ok_or_else(|| Error::Usage("step called on a finished episode; call reset".into()))?;
        let mut step = self.model.virtual_step(&obs, action, &mut self.rng)?;
        self.steps += 1;
        let capped = self.steps >= self.model.spec.max_episode_steps;
        if capped && !step.terminal {
            step.truncated = true;
            step.terminal = true;
        }
        if !step.terminal {
            self.current = Some(step.observation.clone());
        }
        Ok(step)
    }
}
