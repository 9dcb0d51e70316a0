use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::policy::{GaussianPolicy, ValueFunction};
use super::rollout::TrajectoryBatch;
use crate::error::{Error, Result};
use crate::nn::{diag_gaussian_log_prob, Activation, Adam, AdamConfig, Checkpoint, Matrix, MlpGrads};
use crate::rng::SimRng;

/// PPO-clip hyperparameters, shared by the model-based and model-free agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init_log_std: f64,
    /// Global gradient-norm limit per network; 0 disables clipping.
    pub max_grad_norm: f64,
    /// Real steps per update for the model-free agent.
    pub rollout_steps: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            epochs: 10,
            minibatch: 256,
            lr: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.0,
            gamma: 0.99,
            lambda: 0.95,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            init_log_std: 0.0,
            max_grad_norm: 0.5,
            rollout_steps: 1000,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.clip > 0.0) || self.epochs == 0 || self.minibatch == 0 || !(self.lr > 0.0) {
            return Err(Error::Config(
                "ppo needs clip > 0, epochs ≥ 1, minibatch ≥ 1 and lr > 0".into(),
            ));
        }
        if !unit(self.gamma) || !unit(self.lambda) {
            return Err(Error::Config("ppo gamma and lambda must lie in [0, 1]".into()));
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 || self.max_grad_norm < 0.0 {
            return Err(Error::Config("ppo coefficients must be non-negative".into()));
        }
        if self.rollout_steps == 0 {
            return Err(Error::Config("ppo rollout_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Largest `|ρ − 1|` in the very first minibatch.
    pub first_ratio_deviation: f64,
    /// Mean and std of the advantages after normalization.
    pub advantage_mean: f64,
    pub advantage_std: f64,
    pub minibatches: usize,
}

/// `min(ρ·Â, clip(ρ, 1−ε, 1+ε)·Â)`.
pub fn clipped_objective(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Shifts and scales to zero mean and unit population std (std floored at 1e-8).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-8);
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}

/// Policy, value function and their optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoLearner {
    pub policy: GaussianPolicy,
    pub value: ValueFunction,
    pub config: PpoConfig,
    policy_opt: Adam,
    value_opt: Adam,
}

impl PpoLearner {
    pub fn new(obs_dim: usize, action_dim: usize, config: PpoConfig, rng: &mut SimRng) -> Result<Self> {
        config.validate()?;
        let policy = GaussianPolicy::new(
            obs_dim,
            action_dim,
            &config.hidden,
            config.activation,
            config.init_log_std,
            rng,
        );
        let value = ValueFunction::new(obs_dim, &config.hidden, config.activation, rng);
        Ok(PpoLearner {
            policy,
            value,
            policy_opt: Adam::new(AdamConfig::with_lr(config.lr)),
            value_opt: Adam::new(AdamConfig::with_lr(config.lr)),
            config,
        })
    }

    /// Computes advantages for `batch` and runs [`ppo_update`].
    pub fn update(&mut self, batch: &mut TrajectoryBatch, rng: &mut SimRng) -> Result<PpoDiagnostics> {
        batch.compute_advantages(self.config.gamma, self.config.lambda);
        ppo_update(
            &mut self.policy,
            &mut self.value,
            &mut self.policy_opt,
            &mut self.value_opt,
            batch,
            &self.config,
            rng,
        )
    }

    pub fn to_checkpoint(&self, ckpt: &mut Checkpoint) -> Result<()> {
        self.policy.to_checkpoint(ckpt)?;
        self.value.to_checkpoint(ckpt)
    }

    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        self.policy.load_checkpoint(ckpt)?;
        self.value.load_checkpoint(ckpt)
    }

    pub fn round_to_checkpoint_precision(&mut self) {
        self.policy.round_to_checkpoint_precision();
        self.value.round_to_checkpoint_precision();
    }
}

fn clip_grad_norm(grads: &mut MlpGrads, extra: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = (grads.sq_norm() + extra.iter().map(|g| g * g).sum::<f64>()).sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.scale(s);
        extra.iter_mut().for_each(|g| *g *= s);
    }
}

/// PPO-clip update over `config.epochs` passes of shuffled minibatches.
/// Advantages must already be present; they are normalized here.
pub fn ppo_update(
    policy: &mut GaussianPolicy,
    value: &mut ValueFunction,
    policy_opt: &mut Adam,
    value_opt: &mut Adam,
    batch: &TrajectoryBatch,
    config: &PpoConfig,
    rng: &mut SimRng,
) -> Result<PpoDiagnostics> {
    let mut adv = batch
        .advantages
        .clone()
        .ok_or_else(|| Error::Usage("ppo_update needs computed advantages".into()))?;
    let returns = batch
        .returns
        .as_ref()
        .ok_or_else(|| Error::Usage("ppo_update needs computed returns".into()))?;
    let n = batch.len();
    if n == 0 {
        return Err(Error::Usage("ppo_update got an empty batch".into()));
    }
    normalize_advantages(&mut adv);
    let mut diag = PpoDiagnostics {
        advantage_mean: adv.iter().sum::<f64>() / n as f64,
        ..Default::default()
    };
    diag.advantage_std = (adv.iter().map(|a| (a - diag.advantage_mean).powi(2)).sum::<f64>() / n as f64).sqrt();

    let da = policy.action_dim();
    let d = policy.obs_dim();
    let eps = config.clip;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut samples = 0usize;
    for _ in 0..config.epochs {
        idx.shuffle(rng);
        for mb in idx.chunks(config.minibatch) {
            let b = mb.len();
            let w = 1.0 / b as f64;
            let mut x = Matrix::zeros(b, d);
            for (r, &i) in mb.iter().enumerate() {
                x.row_mut(r).copy_from_slice(batch.observations.row(i));
            }

            // policy
            let trace = policy.net.forward_trace(&x)?;
            let mu = trace.output();
            let logvar = policy.log_variance();
            let inv_var: Vec<f64> = logvar.iter().map(|lv| (-lv).exp()).collect();
            let mut d_mu = Matrix::zeros(b, da);
            let mut g_log_std = vec![-config.entropy_coef; da];
            let mut policy_loss = -config.entropy_coef * policy.entropy();
            let mut max_dev: f64 = 0.0;
            for (r, &i) in mb.iter().enumerate() {
                let a = batch.actions.row(i);
                let lp = diag_gaussian_log_prob(mu.row(r), &logvar, a);
                let ratio = (lp - batch.log_probs[i]).exp();
                let obj = clipped_objective(ratio, adv[i], eps);
                policy_loss -= w * obj;
                diag.mean_ratio += ratio;
                diag.approx_kl += batch.log_probs[i] - lp;
                if (ratio - 1.0).abs() > eps {
                    diag.clip_fraction += 1.0;
                }
                max_dev = max_dev.max((ratio - 1.0).abs());
                // d obj / d logπ is ρ·Â on the unclipped branch and zero otherwise
                let g = if ratio * adv[i] <= obj { -w * ratio * adv[i] } else { 0.0 };
                if g != 0.0 {
                    let row = d_mu.row_mut(r);
                    for k in 0..da {
                        let diff = a[k] - mu.get(r, k);
                        row[k] = g * diff * inv_var[k];
                        g_log_std[k] += g * (diff * diff * inv_var[k] - 1.0);
                    }
                }
            }
            if diag.minibatches == 0 {
                diag.first_ratio_deviation = max_dev;
            }
            if !policy_loss.is_finite() {
                return Err(Error::NonFinite(format!("ppo policy loss became {policy_loss}")));
            }
            let (mut grads, _) = policy.net.backward(&trace, &d_mu)?;
            clip_grad_norm(&mut grads, &mut g_log_std, config.max_grad_norm);
            let mut g: Vec<&[f64]> = grads.tensors();
            g.push(&g_log_std);
            let GaussianPolicy { net, log_std } = policy;
            let mut p = net.tensors_mut();
            p.push(log_std);
            policy_opt.step(&mut p, &g)?;
            policy.clamp_log_std();

            // value
            let vtrace = value.net.forward_trace(&x)?;
            let v = vtrace.output();
            let mut dv = Matrix::zeros(b, 1);
            let mut value_loss = 0.0;
            for (r, &i) in mb.iter().enumerate() {
                let err = v.get(r, 0) - returns[i];
                value_loss += w * err * err;
                dv.data[r] = config.value_coef * 2.0 * w * err;
            }
            if !value_loss.is_finite() {
                return Err(Error::NonFinite(format!("ppo value loss became {value_loss}")));
            }
            let (mut vgrads, _) = value.net.backward(&vtrace, &dv)?;
            clip_grad_norm(&mut vgrads, &mut [], config.max_grad_norm);
            let vg = vgrads.tensors();
            value_opt.step(&mut value.net.tensors_mut(), &vg)?;

            diag.policy_loss += policy_loss;
            diag.value_loss += config.value_coef * value_loss;
            diag.minibatches += 1;
            samples += b;
        }
    }
    let m = diag.minibatches as f64;
    diag.policy_loss /= m;
    diag.value_loss /= m;
    diag.mean_ratio /= samples as f64;
    diag.clip_fraction /= samples as f64;
    diag.approx_kl /= samples as f64;
    diag.entropy = policy.entropy();
    if !policy.is_finite() {
        return Err(Error::NonFinite("policy parameters became non-finite".into()));
    }
    Ok(diag)
}
