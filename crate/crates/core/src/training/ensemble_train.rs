use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{fit_normalizer, holdout_split, ReplayBuffer};
use crate::env::Transition;
use crate::error::{Error, Result};
use crate::model::{bound_logvar, bound_logvar_grad, EnsembleTransitionModel};
use crate::nn::{gaussian_nll, gaussian_nll_grad, Adam, AdamConfig, Matrix, Mlp};
use crate::rng::SimRng;

/// Hyperparameters of one model-training call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Upper bound on epochs; early stopping usually ends sooner.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub holdout_ratio: f64,
    pub patience: usize,
    /// Relative holdout-NLL decrease that counts as progress.
    pub min_improvement: f64,
    /// Weight on `Σ(max_logvar − min_logvar)`.
    pub logvar_penalty: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 64,
            lr: 1e-3,
            holdout_ratio: 0.2,
            patience: 5,
            min_improvement: 0.01,
            logvar_penalty: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("model training epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("model training batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("model training lr {} must be positive", self.lr)));
        }
        if !(self.holdout_ratio > 0.0 && self.holdout_ratio < 1.0) {
            return Err(Error::Config(format!(
                "holdout_ratio {} must lie in (0, 1)",
                self.holdout_ratio
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of [`train_ensemble`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean NLL over each member's bootstrap sample, after restoring the best parameters.
    pub train_nll: Vec<f64>,
    /// Best holdout NLL per member; these are the restored parameters.
    pub holdout_nll: Vec<f64>,
    /// Holdout NLL per member right after the normalizer refit, before any update.
    pub initial_holdout_nll: Vec<f64>,
    pub epochs_run: usize,
    /// Whether any member ended below its initial holdout NLL.
    pub improved: bool,
}

impl TrainReport {
    pub fn mean_holdout_nll(&self) -> f64 {
        self.holdout_nll.iter().sum::<f64>() / self.holdout_nll.len() as f64
    }
}

/// Observation points inside [`train_ensemble_with_hooks`]. Indices refer to
/// positions in the buffer's iteration order at call time.
pub trait TrainHooks {
    fn on_split(&mut self, _train: &[usize], _holdout: &[usize]) {}
    fn on_bootstrap(&mut self, _member: usize, _indices: &[usize]) {}
    fn on_gradient_batch(&mut self, _member: usize, _indices: &[usize]) {}
    /// Epoch 0 is the evaluation before any update.
    fn on_epoch(&mut self, _epoch: usize, _holdout_nll: &[f64]) {}
}

/// No-op hooks.
pub struct NoHooks;

impl TrainHooks for NoHooks {}

pub fn train_ensemble(
    model: &mut EnsembleTransitionModel,
    buffer: &ReplayBuffer,
    config: &TrainConfig,
    rng: &mut SimRng,
) -> Result<TrainReport> {
    train_ensemble_with_hooks(model, buffer, config, rng, &mut NoHooks)
}

/// Normalized inputs and delta targets for a fixed data snapshot.
struct Dataset {
    inputs: Matrix,
    targets: Matrix,
}

impl Dataset {
    fn build(model: &EnsembleTransitionModel, data: &[&Transition]) -> Result<Self> {
        let d = model.obs_dim();
        let width = d + model.action_dim();
        let mut inputs = Matrix::zeros(data.len(), width);
        let mut targets = Matrix::zeros(data.len(), d);
        let scale = model.delta_scale().to_vec();
        for (i, t) in data.iter().enumerate() {
            if t.state.len() != d || t.next_state.len() != d {
                return Err(Error::dims("transition observation", d, t.state.len()));
            }
            if t.action.len() != model.action_dim() {
                return Err(Error::dims("transition action", model.action_dim(), t.action.len()));
            }
            model.network_input(&t.state, &t.action, inputs.row_mut(i));
            for (k, y) in targets.row_mut(i).iter_mut().enumerate() {
                *y = (t.next_state[k] - t.state[k]) / scale[k];
            }
        }
        Ok(Dataset { inputs, targets })
    }

    fn gather(&self, idx: &[usize]) -> (Matrix, Matrix) {
        let mut x = Matrix::zeros(idx.len(), self.inputs.cols);
        let mut y = Matrix::zeros(idx.len(), self.targets.cols);
        for (r, &i) in idx.iter().enumerate() {
            x.row_mut(r).copy_from_slice(self.inputs.row(i));
            y.row_mut(r).copy_from_slice(self.targets.row(i));
        }
        (x, y)
    }
}

fn member_nll(model: &EnsembleTransitionModel, member: usize, data: &Dataset, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let d = model.obs_dim();
    let (max, min) = (&model.max_logvar[member], &model.min_logvar[member]);
    let mut total = 0.0;
    let mut lv = vec![0.0; d];
    for chunk in idx.chunks(1024) {
        let (x, y) = data.gather(chunk);
        let out = model.members[member].forward_batch(&x)?;
        for r in 0..chunk.len() {
            let row = out.row(r);
            for k in 0..d {
                lv[k] = bound_logvar(row[d + k], max[k], min[k]);
            }
            total += gaussian_nll(&row[..d], &lv, y.row(r));
        }
    }
    Ok(total / idx.len() as f64)
}

/// Mean per-record Gaussian NLL (normalized delta units) of every member on
/// the given buffer records, using the model's current normalizer.
pub fn holdout_nll(model: &EnsembleTransitionModel, buffer: &ReplayBuffer, indices: &[usize]) -> Result<Vec<f64>> {
    let data: Vec<&Transition> = indices
        .iter()
        .map(|&i| buffer.get(i).ok_or_else(|| Error::Usage(format!("buffer index {i} out of range"))))
        .collect::<Result<_>>()?;
    let ds = Dataset::build(model, &data)?;
    let all: Vec<usize> = (0..data.len()).collect();
    (0..model.members.len()).map(|m| member_nll(model, m, &ds, &all)).collect()
}

/// One Adam step on a minibatch; returns the minibatch loss.
fn train_step(
    model: &mut EnsembleTransitionModel,
    member: usize,
    x: &Matrix,
    y: &Matrix,
    penalty: f64,
    adam: &mut Adam,
) -> Result<f64> {
    let d = model.obs_dim();
    let rows = x.rows;
    let weight = 1.0 / rows as f64;
    let net: &Mlp = &model.members[member];
    let trace = net.forward_trace(x)?;
    let out = trace.output();
    let (max, min) = (&model.max_logvar[member], &model.min_logvar[member]);
    let mut d_out = Matrix::zeros(rows, 2 * d);
    let mut g_max = vec![penalty; d];
    let mut g_min = vec![-penalty; d];
    let mut loss = penalty * max.iter().zip(min).map(|(a, b)| a - b).sum::<f64>();
    let (mut lv, mut dr, mut dmax, mut dmin) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let (mut d_mean, mut d_lv) = (vec![0.0; d], vec![0.0; d]);
    for r in 0..rows {
        let row = out.row(r);
        for k in 0..d {
            (lv[k], dr[k], dmax[k], dmin[k]) = bound_logvar_grad(row[d + k], max[k], min[k]);
        }
        loss += weight * gaussian_nll(&row[..d], &lv, y.row(r));
        gaussian_nll_grad(&row[..d], &lv, y.row(r), weight, &mut d_mean, &mut d_lv);
        let g = d_out.row_mut(r);
        for k in 0..d {
            g[k] = d_mean[k];
            g[d + k] = d_lv[k] * dr[k];
            g_max[k] += d_lv[k] * dmax[k];
            g_min[k] += d_lv[k] * dmin[k];
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "model training loss became {loss} for member {member}"
        )));
    }
    let (grads, _) = net.backward(&trace, &d_out)?;
    let mut g: Vec<&[f64]> = grads.tensors();
    g.push(&g_max);
    g.push(&g_min);
    let EnsembleTransitionModel {
        members,
        max_logvar,
        min_logvar,
        ..
    } = model;
    let mut p = members[member].tensors_mut();
    p.push(&mut max_logvar[member]);
    p.push(&mut min_logvar[member]);
    adam.step(&mut p, &g)?;
    Ok(loss)
}

#[derive(Clone)]
struct Snapshot {
    net: Mlp,
    max: Vec<f64>,
    min: Vec<f64>,
}

impl Snapshot {
    fn take(model: &EnsembleTransitionModel, m: usize) -> Self {
        Snapshot {
            net: model.members[m].clone(),
            max: model.max_logvar[m].clone(),
            min: model.min_logvar[m].clone(),
        }
    }

    fn restore(self, model: &mut EnsembleTransitionModel, m: usize) {
        model.members[m] = self.net;
        model.max_logvar[m] = self.max;
        model.min_logvar[m] = self.min;
    }
}

/// Fits the ensemble to the buffer's real transitions.
///
/// The normalizer is refit on the whole buffer, a holdout split is drawn,
/// and each member trains on its own bootstrap resample of the train split.
/// Early stopping watches each member's holdout NLL; the best parameters seen
/// (including the pre-training state) are restored at the end.
pub fn train_ensemble_with_hooks(
    model: &mut EnsembleTransitionModel,
    buffer: &ReplayBuffer,
    config: &TrainConfig,
    rng: &mut SimRng,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainReport> {
    config.validate()?;
    let snapshot: Vec<&Transition> = buffer.iter().collect();
    let n = snapshot.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "model training needs at least 5 transitions, buffer holds {n}"
        )));
    }
    let (train, holdout) = holdout_split(n, config.holdout_ratio, rng)?;
    hooks.on_split(&train, &holdout);
    model.normalizer = fit_normalizer(buffer)?;
    let data = Dataset::build(model, &snapshot)?;
    let e = model.members.len();

    let bootstraps: Vec<Vec<usize>> = (0..e)
        .map(|m| {
            let b: Vec<usize> = (0..train.len()).map(|_| train[rng.gen_range(0..train.len())]).collect();
            hooks.on_bootstrap(m, &b);
            b
        })
        .collect();

    let initial: Vec<f64> = (0..e)
        .map(|m| member_nll(model, m, &data, &holdout))
        .collect::<Result<_>>()?;
    hooks.on_epoch(0, &initial);
    let mut best = initial.clone();
    let mut best_params: Vec<Snapshot> = (0..e).map(|m| Snapshot::take(model, m)).collect();
    let mut anchor = initial.clone();
    let mut stalled = vec![0usize; e];
    let mut optimizers: Vec<Adam> = (0..e).map(|_| Adam::new(AdamConfig::with_lr(config.lr))).collect();
    let mut order: Vec<Vec<usize>> = bootstraps.clone();

    let mut epochs_run = 0;
    for epoch in 1..=config.epochs {
        for m in 0..e {
            order[m].shuffle(rng);
            for batch in order[m].chunks(config.batch_size) {
                hooks.on_gradient_batch(m, batch);
                let (x, y) = data.gather(batch);
                train_step(model, m, &x, &y, config.logvar_penalty, &mut optimizers[m])?;
            }
        }
        epochs_run = epoch;
        let current: Vec<f64> = (0..e)
            .map(|m| member_nll(model, m, &data, &holdout))
            .collect::<Result<_>>()?;
        hooks.on_epoch(epoch, &current);
        for m in 0..e {
            if !current[m].is_finite() {
                return Err(Error::NonFinite(format!(
                    "holdout NLL of member {m} became {} at epoch {epoch}",
                    current[m]
                )));
            }
            if current[m] < best[m] {
                best[m] = current[m];
                best_params[m] = Snapshot::take(model, m);
            }
            if anchor[m] - current[m] >= config.min_improvement * anchor[m].abs() {
                anchor[m] = current[m];
                stalled[m] = 0;
            } else {
                stalled[m] += 1;
            }
        }
        log::debug!("model epoch {epoch}: holdout nll {current:?}");
        if stalled.iter().all(|&s| s >= config.patience) {
            break;
        }
    }

    for (m, snap) in best_params.into_iter().enumerate() {
        snap.restore(model, m);
    }
    let train_nll: Vec<f64> = (0..e)
        .map(|m| member_nll(model, m, &data, &bootstraps[m]))
        .collect::<Result<_>>()?;
    if let Some(bad) = train_nll.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("training NLL is {bad} after restore")));
    }
    let improved = best.iter().zip(&initial).any(|(b, i)| b < i);
    Ok(TrainReport {
        train_nll,
        holdout_nll: best,
        initial_holdout_nll: initial,
        epochs_run,
        improved,
    })
}
