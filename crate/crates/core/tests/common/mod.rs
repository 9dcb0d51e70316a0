//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use mbrl::nn::{
    diag_gaussian_log_prob, diag_gaussian_log_prob_grad, gaussian_nll, gaussian_nll_grad, mse, mse_grad, Activation,
    Matrix, Mlp,
};
use mbrl::rng::{seeded, SimRng};
use rand::Rng;

pub const ACTIVATIONS: [Activation; 3] = [Activation::Tanh, Activation::Relu, Activation::Swish];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Mse,
    GaussianNll,
    LogProb,
}

pub const LOSSES: [Loss; 3] = [Loss::Mse, Loss::GaussianNll, Loss::LogProb];

/// A random network with its inputs and targets, summed over a small batch.
pub struct GradProblem {
    pub net: Mlp,
    pub loss: Loss,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl GradProblem {
    pub fn random(activation: Activation, loss: Loss, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let in_dim = rng.gen_range(1..=4);
        let target_dim = rng.gen_range(1..=3);
        let out_dim = match loss {
            Loss::Mse => target_dim,
            _ => 2 * target_dim,
        };
        let mut sizes = vec![in_dim];
        for _ in 0..rng.gen_range(1..=2) {
            sizes.push(rng.gen_range(2..=5));
        }
        sizes.push(out_dim);
        let mut net = Mlp::new(&sizes, activation, &mut rng);
        // nonzero biases so relu units are not all sitting on their kink
        for layer in &mut net.layers {
            for b in &mut layer.bias {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        let batch = 3;
        let inputs = (0..batch).map(|_| uniform_vec(&mut rng, in_dim, 1.5)).collect();
        let targets = (0..batch).map(|_| uniform_vec(&mut rng, target_dim, 1.5)).collect();
        GradProblem {
            net,
            loss,
            inputs,
            targets,
        }
    }

    fn split<'a>(&self, out: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        out.split_at(out.len() / 2)
    }

    /// Scalar objective at the current parameters.
    pub fn value(&self, net: &Mlp) -> f64 {
        let mut total = 0.0;
        for (x, t) in self.inputs.iter().zip(&self.targets) {
            let out = net.forward(x).unwrap();
            total += match self.loss {
                Loss::Mse => mse(&out, t),
                Loss::GaussianNll => {
                    let (m, lv) = self.split(&out);
                    gaussian_nll(m, lv, t)
                }
                Loss::LogProb => {
                    let (m, lv) = self.split(&out);
                    diag_gaussian_log_prob(m, lv, t)
                }
            };
        }
        total
    }

    /// Analytic gradient, flattened in `tensors()` order.
    pub fn analytic(&self) -> Vec<f64> {
        let rows = self.inputs.len();
        let in_dim = self.net.input_dim();
        let out_dim = self.net.output_dim();
        let x = Matrix::from_vec(rows, in_dim, self.inputs.concat()).unwrap();
        let trace = self.net.forward_trace(&x).unwrap();
        let mut d = Matrix::zeros(rows, out_dim);
        for r in 0..rows {
            let out = trace.output().row(r).to_vec();
            let t = &self.targets[r];
            let g = d.row_mut(r);
            match self.loss {
                Loss::Mse => mse_grad(&out, t, g),
                Loss::GaussianNll | Loss::LogProb => {
                    let (m, lv) = self.split(&out);
                    let (gm, glv) = g.split_at_mut(out_dim / 2);
                    if self.loss == Loss::GaussianNll {
                        gaussian_nll_grad(m, lv, t, 1.0, gm, glv);
                    } else {
                        diag_gaussian_log_prob_grad(m, lv, t, gm, glv);
                    }
                }
            }
        }
        let (grads, _) = self.net.backward(&trace, &d).unwrap();
        grads.tensors().concat()
    }

    /// Central finite differences with step `h`.
    pub fn numeric(&self, h: f64) -> Vec<f64> {
        let mut net = self.net.clone();
        let mut out = Vec::new();
        let shapes: Vec<usize> = self.net.tensors().iter().map(|t| t.len()).collect();
        for (ti, &len) in shapes.iter().enumerate() {
            for i in 0..len {
                let orig = net.tensors()[ti][i];
                net.tensors_mut()[ti][i] = orig + h;
                let up = self.value(&net);
                net.tensors_mut()[ti][i] = orig - h;
                let down = self.value(&net);
                net.tensors_mut()[ti][i] = orig;
                out.push((up - down) / (2.0 * h));
            }
        }
        out
    }

    /// Largest `|analytic − numeric| / max(1, |analytic|)` over all entries.
    pub fn max_relative_error(&self) -> f64 {
        self.analytic()
            .iter()
            .zip(self.numeric(1e-5))
            .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

pub fn uniform_vec(rng: &mut SimRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Direct double-sum definition of generalized advantage estimates.
///
/// `boundaries[t]` ends a segment after step `t`; `terminals[t]` says whether
/// the value past the boundary is zero. `bootstrap` is the value after the
/// last step when it is not a boundary.
pub fn brute_force_gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    terminals: &[bool],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let next_value = |t: usize| -> f64 {
        if terminals[t] {
            0.0
        } else if t + 1 < n {
            values[t + 1]
        } else {
            bootstrap
        }
    };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for l in 0..n - t {
                let k = t + l;
                let delta = rewards[k] + gamma * next_value(k) - values[k];
                total += (gamma * lambda).powi(l as i32) * delta;
                if terminals[k] {
                    break;
                }
            }
            total
        })
        .collect()
}
