//! Prints the trainable parameter count of each architecture at full size.

use avse::models::{build_model, ModelConfig, ModelKind};

fn main() -> avse::Result<()> {
    println!("{:<14} {:>16} {:>12} {:>12}", "model", "weights+biases", "bn affine", "total");
    for kind in ModelKind::ALL {
        let model = build_model::<f32>(&ModelConfig::standard(kind), 0)?;
        let c = model.param_count();
        println!(
            "{:<14} {:>16} {:>12} {:>12}",
            kind.name(),
            c.weights_biases,
            c.batchnorm_affine,
            c.total()
        );
    }
    Ok(())
}
