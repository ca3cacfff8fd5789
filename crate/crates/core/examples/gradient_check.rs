//! Finite-difference gradient check of every architecture at reduced size.
//!
//! Run with `cargo run --release --example gradient_check`.

use std::time::Instant;

use avse::models::{check_model_gradients, ModelConfig, ModelKind};
use avse::nn::GradCheckOptions;

fn main() -> avse::Result<()> {
    for kind in ModelKind::ALL {
        let start = Instant::now();
        let report = check_model_gradients(&ModelConfig::reduced(kind), 0, 2, 3, GradCheckOptions::default())?;
        println!(
            "{:<14} max rel err {:.2e} at {:<28} checked {:>6}  skipped {:>4}  ({:.1?})",
            kind.name(),
            report.max_rel_error,
            report.worst_param,
            report.checked,
            report.skipped_nonsmooth,
            start.elapsed()
        );
    }
    Ok(())
}
