//! Constrained PPO: advantage estimation, rollout storage, the training loop
//! and checkpoints.

mod buffer;
mod checkpoint;
mod config;
mod gae;
mod trainer;

pub use buffer::{RolloutBuffer, Transition};
pub use checkpoint::{checkpoint_kind, read_checkpoint, write_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use gae::{compute_gae, ppo_clip_loss};
pub use trainer::{check_dims, IterationMetrics, Trainer, MAX_RATIO_DEVIATION, PPO_CHECKPOINT_KIND};
