//! Model-based reinforcement learning toolbox.
//!
//! A learned, uncertainty-aware [`model::EnvironmentModel`] exposes the same
//! reset/step interface as a real [`env::Environment`]. Decision-time
//! planners ([`planning`]) optimize action sequences inside it; the
//! background planner ([`background`]) trains a PPO policy purely on virtual
//! rollouts. The [`harness`] runs model-based and model-free agents under a
//! shared task and protocol configuration.

// Validation code uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod background;
pub mod env;
pub mod error;
pub mod harness;
pub mod model;
pub mod nn;
pub mod planning;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
