//! Optimization: MSE objective, Adam, truncated BPTT chunking, early stopping.

mod adam;
mod config;
mod loss;
mod schedule;
mod trainer;

pub use adam::{adam_step, clip_grad_norm, AdamState};
pub use config::TrainConfig;
pub use loss::mse_loss;
pub use schedule::{early_stop_check, make_chunks, split_train_val, EarlyStop};
pub use trainer::{
    evaluate_mse, predict, train, train_with_progress, EpochRecord, StopReason, TrainExample, TrainOutcome,
    TrainReport,
};
