//! Minimal neural-network engine: tensors, layer kernels with hand-written
//! adjoints, and finite-difference gradient checking.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod gradcheck;
pub mod linear;
pub mod lstm;
pub mod param;
pub mod pool;
mod real;
pub mod tensor;

pub use activation::{Activation, Relu};
pub use batchnorm::BatchNorm;
pub use conv::{conv2d_backward, conv2d_forward, window_output_len, Conv2d};
pub use gradcheck::{gradient_check, Evaluation, GradCheckOptions, GradCheckReport};
pub use linear::{fc_backward, fc_forward, Linear};
pub use lstm::{lstm_step, Lstm, LstmCellParams, LstmState};
pub use param::{Module, Param};
pub use pool::{maxpool2d, maxpool2d_backward, MaxPool2d, PoolCache};
pub use real::Real;
pub use tensor::Tensor;

/// Batch-norm behaviour: batch statistics while training, running statistics otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Uniform initialization bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
