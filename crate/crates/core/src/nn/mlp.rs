use rand::Rng;

use super::activation::Activation;
use super::matrix::{affine, affine_input_grad, affine_param_grad, Matrix};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Fully connected layer; `weight` is `in_dim × out_dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Weights uniform in `±1/√fan_in`, zero bias.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut SimRng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut d = Dense::zeros(in_dim, out_dim);
        for w in &mut d.weight {
            *w = rng.gen_range(-bound..=bound);
        }
        d
    }
}

/// Multi-layer perceptron with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    /// One tag per hidden layer.
    pub activations: Vec<Activation>,
}

/// Per-parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

/// Reusable buffers for [`Mlp::forward_rows`].
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Intermediate values of a batched forward pass, kept for `backward`.
#[derive(Debug, Clone)]
pub struct Trace {
    input: Matrix,
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.post.last().expect("trace of a network with at least one layer")
    }
}

impl Mlp {
    /// `sizes` lists every layer width including input and output.
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut SimRng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| Dense::init(w[0], w[1], rng))
            .collect::<Vec<_>>();
        let activations = vec![activation; layers.len() - 1];
        Mlp { layers, activations }
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect::<Vec<_>>();
        let activations = vec![activation; layers.len() - 1];
        Mlp { layers, activations }
    }

    pub fn from_layers(layers: Vec<Dense>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() || activations.len() + 1 != layers.len() {
            return Err(Error::Usage(
                "need one activation tag per hidden layer".into(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::dims("layer input", pair[0].out_dim, pair[1].in_dim));
            }
        }
        for l in &layers {
            if l.weight.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::Usage("layer arrays do not match its dimensions".into()));
            }
        }
        Ok(Mlp { layers, activations })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.forward_batch(&x)?.data)
    }

    pub fn forward_batch(&self, input: &Matrix) -> Result<Matrix> {
        let mut scratch = Scratch::default();
        let out = self.forward_rows(&input.data, input.rows, &mut scratch)?.to_vec();
        Matrix::from_vec(input.rows, self.output_dim(), out)
    }

    /// Forward pass over `rows` row-major inputs reusing `scratch` buffers.
    /// The returned slice borrows from `scratch`.
    pub fn forward_rows<'s>(&self, input: &[f64], rows: usize, scratch: &'s mut Scratch) -> Result<&'s [f64]> {
        if input.len() != rows * self.input_dim() {
            return Err(Error::dims("network input", rows * self.input_dim(), input.len()));
        }
        let Scratch { a, b } = scratch;
        for (i, layer) in self.layers.iter().enumerate() {
            let (src, dst): (&[f64], &mut Vec<f64>) = match i {
                0 => (input, a),
                _ if i % 2 == 1 => (a.as_slice(), b),
                _ => (b.as_slice(), a),
            };
            dst.resize(rows * layer.out_dim, 0.0);
            affine(src, layer.in_dim, &layer.weight, &layer.bias, dst);
            if let Some(act) = self.activations.get(i) {
                act.apply_inplace(dst);
            }
        }
        let n = rows * self.output_dim();
        Ok(if self.layers.len() % 2 == 1 { &a[..n] } else { &b[..n] })
    }

    pub fn forward_trace(&self, input: &Matrix) -> Result<Trace> {
        if input.cols != self.input_dim() {
            return Err(Error::dims("network input", self.input_dim(), input.cols));
        }
        let rows = input.rows;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = if i == 0 { input } else { &post[i - 1] };
            let mut z = Matrix::zeros(rows, layer.out_dim);
            affine(&x.data, layer.in_dim, &layer.weight, &layer.bias, &mut z.data);
            let a = match self.activations.get(i) {
                Some(act) => {
                    let mut a = Matrix::zeros(rows, layer.out_dim);
                    act.apply(&z.data, &mut a.data);
                    a
                }
                None => z.clone(),
            };
            pre.push(z);
            post.push(a);
        }
        Ok(Trace {
            input: input.clone(),
            pre,
            post,
        })
    }

    /// Reverse-mode pass. `d_out` is ∂loss/∂output for every row; gradients
    /// are summed over rows. Also returns ∂loss/∂input.
    pub fn backward(&self, trace: &Trace, d_out: &Matrix) -> Result<(MlpGrads, Matrix)> {
        let out = trace.output();
        if d_out.rows != out.rows || d_out.cols != out.cols {
            return Err(Error::Usage(format!(
                "output gradient is {}×{}, expected {}×{}",
                d_out.rows, d_out.cols, out.rows, out.cols
            )));
        }
        let rows = d_out.rows;
        let mut grads = self.zero_grads();
        let mut delta = d_out.data.clone();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if let Some(act) = self.activations.get(i) {
                act.backprop(&trace.pre[i].data, &trace.post[i].data, &mut delta);
            }
            let x = if i == 0 { &trace.input } else { &trace.post[i - 1] };
            let g = &mut grads.layers[i];
            affine_param_grad(&x.data, layer.in_dim, &delta, layer.out_dim, &mut g.weight, &mut g.bias);
            let mut dx = vec![0.0; rows * layer.in_dim];
            affine_input_grad(&delta, layer.out_dim, &layer.weight, layer.in_dim, &mut dx);
            delta = dx;
        }
        let d_in = Matrix::from_vec(rows, self.input_dim(), delta)?;
        Ok((grads, d_in))
    }

    /// Single-example convenience: forward then backward.
    pub fn gradients(&self, input: &[f64], d_out: &[f64]) -> Result<MlpGrads> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        let trace = self.forward_trace(&x)?;
        let d = Matrix::from_vec(1, d_out.len(), d_out.to_vec())?;
        Ok(self.backward(&trace, &d)?.0)
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

impl MlpGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|g| *g *= factor);
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&g| g == 0.0))
    }
}
