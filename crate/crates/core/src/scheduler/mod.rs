//! Stochastic binary transmission policy trained with PPO.

mod buffer;
mod gae;
mod nets;
mod ppo;

pub use buffer::RolloutBuffer;
pub use gae::{compute_gae, gae_double_sum};
pub use nets::{policy_sample, PolicyNet, ValueNet};
pub use ppo::{clipped_term, ppo_update, value_loss, PpoConfig, PpoStats, SurrogateBatch};
