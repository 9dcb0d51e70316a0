//! Feed-forward networks with exact reverse-mode gradients, Gaussian losses,
//! Adam and the checkpoint container.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod matrix;
pub mod mlp;

pub use activation::{sigmoid, softplus, Activation};
pub use adam::{Adam, AdamConfig};
pub use checkpoint::{round_to_f32, Checkpoint};
pub use loss::{
    diag_gaussian_entropy, diag_gaussian_log_prob, diag_gaussian_log_prob_grad, gaussian_nll,
    gaussian_nll_grad, mse, mse_grad,
};
pub use matrix::Matrix;
pub use mlp::{Dense, Mlp, MlpGrads, Scratch, Trace};
