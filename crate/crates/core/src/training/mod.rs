//! Optimizer, staged training loops and checkpoints.

mod checkpoint;
mod config;
mod optimizer;
mod trainer;

pub use checkpoint::{checkpoint_from_archive, checkpoint_load, checkpoint_save, checkpoint_to_archive};
pub use config::{LossKind, TrainConfig};
pub use optimizer::AdamState;
pub use trainer::{train_stage, train_stage1, train_stage2, Stage, TrainReport, TrainState, Trainer};
