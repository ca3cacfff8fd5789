//! Command-line front end. `run` returns the process exit code.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::data::{build_corpus, load_dataset, read_lips, CorpusSpec, DatasetManifest, Split};
use crate::dsp::{read_wav, stft, write_wav, N_BINS};
use crate::eval::{enhance, evaluate, export_spectrogram};
use crate::models::{check_model_gradients, load_checkpoint, save_checkpoint, ModelConfig, ModelKind};
use crate::nn::GradCheckOptions;
use crate::pipeline::{train_model, TrainJob};
use crate::train::TrainConfig;
use crate::{Error, Result};

/// Gradient checks pass below this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "avse", version, about = "Audio-visual speech enhancement toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a synthetic audio-visual corpus.
    Synth {
        /// Corpus spec file (key=value).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on the train split of a manifest.
    Train {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        manifest: PathBuf,
        /// Training config file (key=value).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for checkpoint.bin, train_log.csv and summary.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Enhance one corrupted recording.
    Enhance {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corrupted 16 kHz mono WAV.
        #[arg(long)]
        input: PathBuf,
        /// Lip-frame file (required by bimodal checkpoints).
        #[arg(long)]
        lips: Option<PathBuf>,
        /// Output WAV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a test manifest; writes scores.csv and aggregates.csv.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the log power spectrogram of a WAV file as a binary PGM.
    Spectrogram {
        #[arg(long)]
        input: PathBuf,
        /// Output PGM path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient check of a model at reduced dimensions.
    Gradcheck {
        #[arg(long)]
        model: ModelKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl clap::ValueEnum for ModelKind {
    fn value_variants<'a>() -> &'a [Self] {
        &ModelKind::ALL
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn synth(config: Option<&Path>, seed: Option<u64>, out: &Path, stdout: &mut dyn Write) -> Result<()> {
    let mut spec = match config {
        Some(p) => CorpusSpec::parse_str(&read_text(p)?)?,
        None => CorpusSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let manifest = build_corpus(&spec, out)?;
    let _ = writeln!(
        stdout,
        "wrote {} records to {}",
        manifest.records.len(),
        out.join("manifest.tsv").display()
    );
    Ok(())
}

fn train(
    kind: ModelKind,
    manifest: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut dataset = load_dataset(manifest)?;
    dataset.utterances.retain(|u| u.record.split == Split::Train);
    if dataset.utterances.is_empty() {
        return Err(Error::invalid(format!("{} has no train-split records", manifest.display())));
    }
    create_dir(out)?;
    let job = TrainJob::standard(kind, cfg);
    let trained = train_model(&dataset.utterances, &job, |e| {
        let _ = writeln!(stdout, "epoch {} train_mse {:.6} val_mse {:.6}", e.epoch, e.train_mse, e.val_mse);
    })?;
    save_checkpoint(&trained.checkpoint, out.join("checkpoint.bin"))?;
    for (name, text) in [("train_log.csv", trained.report.to_csv()), ("summary.txt", trained.report.summary())] {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    let _ = write!(stdout, "{}", trained.report.summary());
    Ok(())
}

fn run_command(command: Command, stdout: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Synth { config, seed, out } => synth(config.as_deref(), seed, &out, stdout)?,
        Command::Train {
            model,
            manifest,
            config,
            seed,
            out,
        } => train(model, &manifest, config.as_deref(), seed, &out, stdout)?,
        Command::Enhance {
            checkpoint,
            input,
            lips,
            out,
        } => {
            let ck = load_checkpoint(&checkpoint)?;
            let lips = lips.map(read_lips).transpose()?;
            let enhanced = enhance(&ck, &read_wav(&input)?, lips.as_ref())?;
            write_wav(&out, &enhanced.signal)?;
            let _ = writeln!(stdout, "wrote {} samples to {}", enhanced.signal.len(), out.display());
        }
        Command::Evaluate {
            checkpoint,
            manifest,
            out,
        } => {
            let ck = load_checkpoint(&checkpoint)?;
            let result = evaluate(&ck, &DatasetManifest::read(&manifest)?)?;
            result.write(&out)?;
            let _ = write!(stdout, "{}", result.aggregates_csv());
        }
        Command::Spectrogram { input, out } => {
            let spec = stft(&read_wav(&input)?)?;
            let img = export_spectrogram(&spec.log_power, N_BINS, &out)?;
            let _ = writeln!(stdout, "wrote {}x{} image to {}", img.width, img.height, out.display());
        }
        Command::Gradcheck { model, seed } => {
            let report = check_model_gradients(&ModelConfig::reduced(model), seed, 2, 3, GradCheckOptions::default())?;
            for (name, err) in &report.per_param {
                let _ = writeln!(stdout, "{name:<32} {err:.3e}");
            }
            let _ = writeln!(
                stdout,
                "checked {} skipped {} (non-smooth)\nmax relative error: {:.3e} at {}",
                report.checked, report.skipped_nonsmooth, report.max_rel_error, report.worst_param
            );
            if report.max_rel_error >= GRADCHECK_TOLERANCE {
                return Ok(1);
            }
        }
    }
    Ok(0)
}

/// Runs the CLI on `argv` (including the program name), writing normal output
/// to `stdout` and diagnostics to `stderr`.
pub fn run_with(argv: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    match run_command(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

pub fn run(argv: &[String]) -> i32 {
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let argv: Vec<String> = std::iter::once("avse").chain(args.iter().copied()).map(String::from).collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with(&argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(call(&["frobnicate"]).0, 2);
        assert_eq!(call(&["synth", "--bogus"]).0, 2);
        assert_eq!(call(&["gradcheck", "--model", "cnn"]).0, 2);
        let (code, _, err) = call(&[]);
        assert_eq!(code, 2);
        assert!(err.contains("Usage"));
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        for sub in ["synth", "train", "enhance", "evaluate", "spectrogram", "gradcheck"] {
            assert!(out.contains(sub), "{sub}");
        }
    }

    #[test]
    fn runtime_errors_exit_one_with_message() {
        let (code, _, err) = call(&["spectrogram", "--input", "/nonexistent.wav", "--out", "/tmp/x.pgm"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error:"));
    }

    #[test]
    fn gradcheck_passes_for_the_feed_forward_model() {
        let (code, out, _) = call(&["gradcheck", "--model", "single_dnn"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("max relative error"));
    }
}
