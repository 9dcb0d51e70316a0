//! Background planning: an on-policy learner (PPO-clip with GAE) improved on
//! virtual rollouts inside the environment model.

mod me_ppo;
mod policy;
mod ppo;
mod rollout;

pub use me_ppo::{me_ppo_train_iteration, IterationReport, MeConfig, MePpoAgent};
pub use policy::{GaussianPolicy, ValueFunction, LOG_STD_MAX, LOG_STD_MIN};
pub use ppo::{clipped_objective, normalize_advantages, ppo_update, PpoConfig, PpoDiagnostics, PpoLearner};
pub use rollout::{collect_rollouts, collect_virtual_rollouts, gae_advantages, TrajectoryBatch};
