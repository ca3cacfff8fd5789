//! Trains all three architectures on one synthetic corpus and compares their
//! validation and test errors.
//!
//! `cargo run --release --example train_and_compare -- [n_train] [max_epochs]`

use avse::data::{build_corpus, load_dataset, CorpusSpec};
use avse::eval::evaluate_utterances;
use avse::models::ModelKind;
use avse::pipeline::{train_model, TrainJob};
use avse::train::TrainConfig;

fn main() -> avse::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_train = args.next().and_then(|a| a.parse().ok()).unwrap_or(40);
    let max_epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);
    let dir = tempfile::tempdir().expect("temp dir");
    let spec = CorpusSpec {
        n_train,
        n_test: 4,
        min_duration_s: 0.5,
        max_duration_s: 1.0,
        ..CorpusSpec::default()
    };
    build_corpus(&spec, dir.path())?;
    let train = load_dataset(dir.path().join("train.tsv"))?;
    let test = load_dataset(dir.path().join("test.tsv"))?;

    println!("{:<14} {:>8} {:>10} {:>10} {:>12}", "model", "epochs", "val mse", "test mse", "segsnr gain");
    for kind in ModelKind::ALL {
        let cfg = TrainConfig {
            max_epochs,
            ..TrainConfig::default()
        };
        let trained = train_model(&train.utterances, &TrainJob::standard(kind, cfg), |_| {})?;
        let result = evaluate_utterances(&trained.checkpoint, &test.utterances)?;
        let gain = result.scores.iter().map(|s| s.segsnr_gain_db()).sum::<f64>() / result.scores.len() as f64;
        println!(
            "{:<14} {:>8} {:>10.4} {:>10.4} {:>10.2} dB",
            kind.name(),
            trained.report.epochs.len(),
            trained.report.best_val_mse,
            result.mean_mse(),
            gain
        );
    }
    Ok(())
}
