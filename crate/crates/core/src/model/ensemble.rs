use std::cell::RefCell;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{PredictMode, TransitionModel};
use crate::error::{Error, Result};
use crate::nn::activation::{sigmoid, softplus};
use crate::nn::checkpoint::round_to_f32;
use crate::nn::{Activation, Checkpoint, Matrix, Mlp, Scratch};
use crate::rng::SimRng;

pub const MAX_LOGVAR_INIT: f64 = 0.5;
pub const MIN_LOGVAR_INIT: f64 = -10.0;
pub const STD_FLOOR: f64 = 1e-6;

/// Soft-bounds a raw log-variance: `max - softplus(max - raw)`, then
/// `min + softplus(bounded - min)`.
pub fn bound_logvar(raw: f64, max: f64, min: f64) -> f64 {
    let upper = max - softplus(max - raw);
    min + softplus(upper - min)
}

/// `exp(bound_logvar(raw, max, min))` in closed form,
/// `eᵐⁱⁿ + eᵐᵃˣ·sigmoid(raw − max)`, which needs no logarithms.
pub fn bounded_variance(raw: f64, max: f64, min: f64) -> f64 {
    min.exp() + max.exp() / (1.0 + (max - raw).exp())
}

/// [`bound_logvar`] with its partial derivatives w.r.t. `(raw, max, min)`.
pub fn bound_logvar_grad(raw: f64, max: f64, min: f64) -> (f64, f64, f64, f64) {
    let upper = max - softplus(max - raw);
    let value = min + softplus(upper - min);
    let s_up = sigmoid(max - raw);
    let s_lo = sigmoid(upper - min);
    (value, s_up * s_lo, (1.0 - s_up) * s_lo, 1.0 - s_lo)
}

/// Per-dimension affine input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population mean and standard deviation of `rows`, std floored at [`STD_FLOOR`].
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InsufficientData("cannot fit a normalizer to no data".into()))?;
        let dim = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r.as_ref()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Normalizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

fn default_members() -> usize {
    5
}
fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_activation() -> Activation {
    Activation::Swish
}

/// Architecture of the ensemble transition model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_members")]
    pub ensemble_size: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            ensemble_size: default_members(),
            hidden: default_hidden(),
            activation: default_activation(),
        }
    }
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

/// Ensemble of Gaussian-head MLPs predicting observation deltas.
///
/// Each member maps the normalized `(observation, action)` to the mean and raw
/// log-variance of the delta expressed in units of the observation slice of
/// the input normalizer's std. Log-variances are soft-bounded per member.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleTransitionModel {
    obs_dim: usize,
    action_dim: usize,
    config: EnsembleConfig,
    pub members: Vec<Mlp>,
    pub max_logvar: Vec<Vec<f64>>,
    pub min_logvar: Vec<Vec<f64>>,
    pub normalizer: Normalizer,
}

impl EnsembleTransitionModel {
    pub fn new(obs_dim: usize, action_dim: usize, config: &EnsembleConfig, rng: &mut SimRng) -> Result<Self> {
        if config.ensemble_size == 0 {
            return Err(Error::Config("ensemble_size must be at least 1".into()));
        }
        if config.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        let sizes = Self::layer_sizes(obs_dim, action_dim, &config.hidden);
        let members = (0..config.ensemble_size)
            .map(|_| Mlp::new(&sizes, config.activation, rng))
            .collect();
        Ok(EnsembleTransitionModel {
            obs_dim,
            action_dim,
            config: config.clone(),
            members,
            max_logvar: vec![vec![MAX_LOGVAR_INIT; obs_dim]; config.ensemble_size],
            min_logvar: vec![vec![MIN_LOGVAR_INIT; obs_dim]; config.ensemble_size],
            normalizer: Normalizer::identity(obs_dim + action_dim),
        })
    }

    fn layer_sizes(obs_dim: usize, action_dim: usize, hidden: &[usize]) -> Vec<usize> {
        std::iter::once(obs_dim + action_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(2 * obs_dim))
            .collect()
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Scale mapping normalized deltas back to observation units.
    pub fn delta_scale(&self) -> &[f64] {
        &self.normalizer.std[..self.obs_dim]
    }

    fn check_member(&self, member: usize) -> Result<()> {
        if member >= self.members.len() {
            return Err(Error::Usage(format!(
                "member index {member} out of range ({} members)",
                self.members.len()
            )));
        }
        Ok(())
    }

    /// Normalized network input for one `(observation, action)` pair.
    pub fn network_input(&self, obs: &[f64], action: &[f64], out: &mut [f64]) {
        let n = &self.normalizer;
        for (i, x) in obs.iter().chain(action).enumerate() {
            out[i] = (x - n.mean[i]) / n.std[i];
        }
    }

    /// Mean and bounded log-variance of the normalized delta.
    pub fn member_output(&self, member: usize, obs: &[f64], action: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_member(member)?;
        if obs.len() != self.obs_dim {
            return Err(Error::dims("observation", self.obs_dim, obs.len()));
        }
        if action.len() != self.action_dim {
            return Err(Error::dims("action", self.action_dim, action.len()));
        }
        let mut x = vec![0.0; self.obs_dim + self.action_dim];
        self.network_input(obs, action, &mut x);
        let out = self.members[member].forward(&x)?;
        let d = self.obs_dim;
        let logvar = (0..d)
            .map(|i| bound_logvar(out[d + i], self.max_logvar[member][i], self.min_logvar[member][i]))
            .collect();
        Ok((out[..d].to_vec(), logvar))
    }

    /// Predicted aleatoric variance of the next observation, in observation units.
    pub fn predicted_variance(&self, member: usize, obs: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let (_, logvar) = self.member_output(member, obs, action)?;
        Ok(logvar
            .iter()
            .zip(self.delta_scale())
            .map(|(lv, s)| lv.exp() * s * s)
            .collect())
    }

    /// Ensemble-mean prediction of the next observation.
    pub fn mean_prediction(&self, obs: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.obs_dim];
        let mut rng = crate::rng::seeded(0);
        for m in 0..self.members.len() {
            let p = self.predict(m, obs, action, &mut rng, PredictMode::Mean)?;
            acc.iter_mut().zip(&p).for_each(|(a, x)| *a += x);
        }
        let e = self.members.len() as f64;
        Ok(acc.into_iter().map(|a| a / e).collect())
    }

    /// `(eᵐⁱⁿ, eᵐᵃˣ)` per output dimension of one member.
    fn variance_bounds(&self, member: usize) -> Vec<(f64, f64)> {
        self.min_logvar[member]
            .iter()
            .zip(&self.max_logvar[member])
            .map(|(lo, hi)| (lo.exp(), hi.exp()))
            .collect()
    }

    fn compose(
        &self,
        member: usize,
        obs: &[f64],
        raw: &[f64],
        mut noise: Option<(&mut SimRng, &[(f64, f64)])>,
        out: &mut [f64],
    ) {
        let d = self.obs_dim;
        let scale = self.delta_scale();
        for i in 0..d {
            let mut delta = raw[i];
            if let Some((rng, bounds)) = noise.as_mut() {
                let (e_min, e_max) = bounds[i];
                // bounded_variance with the exponentials of the bounds hoisted
                let var = e_min + e_max / (1.0 + (self.max_logvar[member][i] - raw[d + i]).exp());
                let z: f64 = StandardNormal.sample(*rng);
                delta += var.sqrt() * z;
            }
            out[i] = obs[i] + scale[i] * delta;
        }
    }

    pub fn to_checkpoint(&self, ckpt: &mut Checkpoint) -> Result<()> {
        for (i, m) in self.members.iter().enumerate() {
            ckpt.insert_mlp(&format!("member{i}"), m)?;
        }
        let dim = self.normalizer.dim();
        ckpt.insert("normalizer/mean", &[dim], &self.normalizer.mean)?;
        ckpt.insert("normalizer/std", &[dim], &self.normalizer.std)?;
        let e = self.members.len();
        ckpt.insert("max_logvar", &[e, self.obs_dim], &self.max_logvar.concat())?;
        ckpt.insert("min_logvar", &[e, self.obs_dim], &self.min_logvar.concat())?;
        Ok(())
    }

    /// Loads parameters saved by [`Self::to_checkpoint`] into a model of the same architecture.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let sizes = Self::layer_sizes(self.obs_dim, self.action_dim, &self.config.hidden);
        let members = (0..self.members.len())
            .map(|i| ckpt.get_mlp(&format!("member{i}"), &sizes, self.config.activation))
            .collect::<Result<Vec<_>>>()?;
        let dim = self.normalizer.dim();
        let mean = ckpt.get_f64("normalizer/mean", &[dim])?;
        let std = ckpt.get_f64("normalizer/std", &[dim])?;
        let e = self.members.len();
        let d = self.obs_dim;
        let max = ckpt.get_f64("max_logvar", &[e, d])?;
        let min = ckpt.get_f64("min_logvar", &[e, d])?;
        self.members = members;
        self.normalizer = Normalizer { mean, std };
        self.max_logvar = max.chunks(d).map(<[f64]>::to_vec).collect();
        self.min_logvar = min.chunks(d).map(<[f64]>::to_vec).collect();
        Ok(())
    }

    /// Rounds every parameter to the precision a checkpoint stores.
    pub fn round_to_checkpoint_precision(&mut self) {
        for m in &mut self.members {
            m.tensors_mut().into_iter().for_each(round_to_f32);
        }
        self.max_logvar.iter_mut().chain(self.min_logvar.iter_mut()).for_each(|v| round_to_f32(v));
        round_to_f32(&mut self.normalizer.mean);
        round_to_f32(&mut self.normalizer.std);
    }

    /// Picks a member uniformly. Draws nothing for a single-member ensemble.
    pub fn sample_member(num_members: usize, rng: &mut SimRng) -> usize {
        if num_members > 1 {
            rng.gen_range(0..num_members)
        } else {
            0
        }
    }
}

impl TransitionModel for EnsembleTransitionModel {
    fn num_members(&self) -> usize {
        self.members.len()
    }

    fn predict(
        &self,
        member: usize,
        obs: &[f64],
        action: &[f64],
        rng: &mut SimRng,
        mode: PredictMode,
    ) -> Result<Vec<f64>> {
        self.check_member(member)?;
        if obs.len() != self.obs_dim {
            return Err(Error::dims("observation", self.obs_dim, obs.len()));
        }
        if action.len() != self.action_dim {
            return Err(Error::dims("action", self.action_dim, action.len()));
        }
        let mut x = vec![0.0; self.obs_dim + self.action_dim];
        self.network_input(obs, action, &mut x);
        let raw = self.members[member].forward(&x)?;
        let mut out = vec![0.0; self.obs_dim];
        let bounds = self.variance_bounds(member);
        let noise = (mode == PredictMode::Sampled).then_some((rng, bounds.as_slice()));
        self.compose(member, obs, &raw, noise, &mut out);
        Ok(out)
    }

    fn predict_batch(
        &self,
        members: &[usize],
        obs: &Matrix,
        actions: &Matrix,
        rngs: &mut [SimRng],
        mode: PredictMode,
    ) -> Result<Matrix> {
        let rows = obs.rows;
        if obs.cols != self.obs_dim || actions.cols != self.action_dim || actions.rows != rows {
            return Err(Error::Usage("predict_batch: observation/action shapes do not match the model".into()));
        }
        if members.len() != rows || (mode == PredictMode::Sampled && rngs.len() != rows) {
            return Err(Error::Usage("predict_batch: one member and one stream per row required".into()));
        }
        let in_dim = self.obs_dim + self.action_dim;
        let out_dim = 2 * self.obs_dim;
        let mut out = Matrix::zeros(rows, self.obs_dim);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); self.members.len()];
        for (row, &m) in members.iter().enumerate() {
            self.check_member(m)?;
            groups[m].push(row);
        }
        SCRATCH.with(|cell| -> Result<()> {
            let mut scratch = cell.borrow_mut();
            let mut input = Vec::new();
            for (m, rows_of_m) in groups.iter().enumerate() {
                if rows_of_m.is_empty() {
                    continue;
                }
                input.resize(rows_of_m.len() * in_dim, 0.0);
                for (k, &row) in rows_of_m.iter().enumerate() {
                    self.network_input(obs.row(row), actions.row(row), &mut input[k * in_dim..(k + 1) * in_dim]);
                }
                let raw = self.members[m].forward_rows(&input, rows_of_m.len(), &mut scratch)?;
                let bounds = self.variance_bounds(m);
                for (k, &row) in rows_of_m.iter().enumerate() {
                    let r = &raw[k * out_dim..(k + 1) * out_dim];
                    let dst = &mut out.data[row * self.obs_dim..(row + 1) * self.obs_dim];
                    let noise = match mode {
                        PredictMode::Sampled => Some((&mut rngs[row], bounds.as_slice())),
                        PredictMode::Mean => None,
                    };
                    self.compose(m, obs.row(row), r, noise, dst);
                }
            }
            Ok(())
        })?;
        Ok(out)
    }
}
