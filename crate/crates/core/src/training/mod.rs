//! Losses, the Adam optimizer, synthetic data and the two-stage training
//! protocol.

mod adam;
mod data;
mod losses;
mod trainer;

pub use adam::{adam_step, collect_grads, AdamConfig, Grads, OptimizerState};
pub use data::{Clip, MaskKind, SyntheticDatasetSpec};
pub use losses::{l1_loss, migration_loss};
pub use trainer::{
    check_prior, pretrain_image, prior_trace, running_mean, train_video, write_log_csv, LogRow,
    LossWeights, TrainConfig, TrainOutput,
};
