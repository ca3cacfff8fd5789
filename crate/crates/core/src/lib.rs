pub mod cli;
pub mod data;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
