//! Decision-time planning: action-sequence optimizers evaluated by particle
//! rollouts inside an environment model, driven in a receding-horizon loop.

mod cem;
mod mpc;
mod pets;
mod shooting;

pub use cem::{cem_optimize, CemConfig};
pub use mpc::{MpcPlanner, PlannerConfig, PlannerKind};
pub use pets::{Component, PetsAgent};
pub use shooting::{best_index, evaluate_candidates, random_shooting, ShootingConfig};

/// Outcome of one planner call.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    /// Flattened `horizon × action_dim` sequence.
    pub best_sequence: Vec<f64>,
    /// Objective value of the winning candidate (for CEM, the best elite of
    /// the final iteration).
    pub best_return: f64,
    /// Best elite return per CEM iteration; a single entry for shooting.
    pub history: Vec<f64>,
}
