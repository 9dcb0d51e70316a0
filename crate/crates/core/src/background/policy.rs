use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{diag_gaussian_entropy, diag_gaussian_log_prob, round_to_f32, Activation, Checkpoint, Matrix, Mlp};
use crate::rng::SimRng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Diagonal Gaussian policy with a state-independent log-std. Sampled actions
/// are returned unclipped; the environment clips them on execution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        activation: Activation,
        init_log_std: f64,
        rng: &mut SimRng,
    ) -> Self {
        let sizes = layer_sizes(obs_dim, hidden, action_dim);
        let mut net = Mlp::new(&sizes, activation, rng);
        // near-zero initial means keep early behaviour close to the noise scale
        if let Some(last) = net.layers.last_mut() {
            last.weight.iter_mut().for_each(|w| *w *= 0.01);
        }
        GaussianPolicy {
            net,
            log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); action_dim],
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(obs)
    }

    /// `log N(action; μ(obs), σ²)`.
    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let mean = self.mean(obs)?;
        Ok(diag_gaussian_log_prob(&mean, &self.log_variance(), action))
    }

    pub fn log_variance(&self) -> Vec<f64> {
        self.log_std.iter().map(|s| 2.0 * s).collect()
    }

    pub fn entropy(&self) -> f64 {
        diag_gaussian_entropy(&self.log_std)
    }

    /// Draws an action and returns it with its log-probability.
    pub fn sample(&self, obs: &[f64], rng: &mut SimRng) -> Result<(Vec<f64>, f64)> {
        let mean = self.mean(obs)?;
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + s.exp() * z
            })
            .collect();
        let lp = diag_gaussian_log_prob(&mean, &self.log_variance(), &action);
        Ok((action, lp))
    }

    pub fn clamp_log_std(&mut self) {
        self.log_std
            .iter_mut()
            .for_each(|s| *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }

    pub fn is_finite(&self) -> bool {
        self.net.is_finite() && self.log_std.iter().all(|s| s.is_finite())
    }

    pub fn to_checkpoint(&self, ckpt: &mut Checkpoint) -> Result<()> {
        ckpt.insert_mlp("policy", &self.net)?;
        ckpt.insert("policy/log_std", &[self.log_std.len()], &self.log_std)
    }

    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let act = self.net.activations.first().copied().unwrap_or(Activation::Tanh);
        let net = ckpt.get_mlp("policy", &self.net.sizes(), act)?;
        let log_std = ckpt.get_f64("policy/log_std", &[self.log_std.len()])?;
        self.net = net;
        self.log_std = log_std;
        Ok(())
    }

    pub fn round_to_checkpoint_precision(&mut self) {
        self.net.tensors_mut().into_iter().for_each(round_to_f32);
        round_to_f32(&mut self.log_std);
    }
}

/// State-value network with a scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub net: Mlp,
}

impl ValueFunction {
    pub fn new(obs_dim: usize, hidden: &[usize], activation: Activation, rng: &mut SimRng) -> Self {
        ValueFunction {
            net: Mlp::new(&layer_sizes(obs_dim, hidden, 1), activation, rng),
        }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        let v = self.net.forward(obs)?[0];
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("value estimate is {v}")));
        }
        Ok(v)
    }

    pub fn values(&self, obs: &Matrix) -> Result<Vec<f64>> {
        Ok(self.net.forward_batch(obs)?.data)
    }

    pub fn to_checkpoint(&self, ckpt: &mut Checkpoint) -> Result<()> {
        ckpt.insert_mlp("value", &self.net)
    }

    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let act = self.net.activations.first().copied().unwrap_or(Activation::Tanh);
        self.net = ckpt.get_mlp("value", &self.net.sizes(), act)?;
        Ok(())
    }

    pub fn round_to_checkpoint_precision(&mut self) {
        self.net.tensors_mut().into_iter().for_each(round_to_f32);
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}
