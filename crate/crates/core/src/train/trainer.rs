use std::ops::Range;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, clip_grad_norm, early_stop_check, make_chunks, mse_loss, AdamState, EarlyStop, TrainConfig};
use crate::data::pixel_intensity;
use crate::models::{context_windows, Batch, Model, ModelConfig};
use crate::nn::{Mode, Tensor};
use crate::{Error, Result};

/// One utterance in network units.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub id: String,
    /// Standardized per-frame features, `[T × D]`.
    pub inputs: Vec<f32>,
    /// Lip frames `[T × S·S]`, 8-bit intensities (`value / 255`), bimodal only.
    /// Shared because several corrupted versions reuse one clean recording.
    pub images: Option<Arc<[u8]>>,
    /// Standardized clean log power, `[T × O]`.
    pub targets: Vec<f32>,
}

impl TrainExample {
    pub fn frames(&self, target_dim: usize) -> usize {
        self.targets.len() / target_dim.max(1)
    }
}

/// Example with network-ready rows (context windows for the feed-forward model).
struct Prepared<'a> {
    rows: Vec<f32>,
    example: &'a TrainExample,
    frames: usize,
}

fn prepare<'a>(config: &ModelConfig, ex: &'a TrainExample) -> Result<Prepared<'a>> {
    let d = config.audio_dim;
    let o = config.output_dim;
    if ex.inputs.len() % d != 0 || ex.targets.len() % o != 0 || ex.inputs.len() / d != ex.targets.len() / o {
        return Err(Error::invalid(format!("{}: inputs and targets disagree on frame count", ex.id)));
    }
    let frames = ex.inputs.len() / d;
    if frames == 0 {
        return Err(Error::invalid(format!("{}: empty utterance", ex.id)));
    }
    match (&ex.images, config.kind.uses_images()) {
        (Some(img), true) if img.len() != frames * config.image_size * config.image_size => {
            return Err(Error::invalid(format!("{}: lip frame count differs from audio", ex.id)));
        }
        (None, true) => return Err(Error::invalid(format!("{}: bimodal training needs lip frames", ex.id))),
        _ => {}
    }
    let rows = if config.frames_per_window > 1 {
        let x: Vec<f64> = ex.inputs.iter().map(|&v| v as f64).collect();
        context_windows(&x, d, config.frames_per_window)?.into_iter().map(|v| v as f32).collect()
    } else {
        ex.inputs.clone()
    };
    Ok(Prepared { rows, example: ex, frames })
}

fn assemble(config: &ModelConfig, data: &[Prepared], chunks: &[(usize, Range<usize>)]) -> Result<(Batch<f32>, Tensor<f32>)> {
    let width = config.audio_input_dim();
    let o = config.output_dim;
    let pix = config.image_size * config.image_size;
    let n: usize = chunks.iter().map(|(_, r)| r.len()).sum();
    let mut audio = Vec::with_capacity(n * width);
    let mut target = Vec::with_capacity(n * o);
    let mut images = config.kind.uses_images().then(|| Vec::with_capacity(n * pix));
    let mut segments = Vec::with_capacity(chunks.len());
    let mut start = 0;
    for (u, r) in chunks {
        let p = &data[*u];
        audio.extend_from_slice(&p.rows[r.start * width..r.end * width]);
        target.extend_from_slice(&p.example.targets[r.start * o..r.end * o]);
        if let (Some(dst), Some(src)) = (images.as_mut(), p.example.images.as_ref()) {
            dst.extend(src[r.start * pix..r.end * pix].iter().map(|&v| pixel_intensity(v)));
        }
        segments.push(start..start + r.len());
        start += r.len();
    }
    let s = config.image_size;
    let images = images.map(|v| Tensor::from_vec(&[n, 1, s, s], v)).transpose()?;
    Ok((
        Batch {
            audio: Tensor::from_vec(&[n, width], audio)?,
            images,
            segments,
        },
        Tensor::from_vec(&[n, o], target)?,
    ))
}

/// Infer-mode prediction for one utterance, processed in chunks of `chunk_len`
/// frames (recurrent state restarts at each chunk, as in training).
pub fn predict(model: &mut Model<f32>, ex: &TrainExample, chunk_len: usize) -> Result<Tensor<f32>> {
    let config = model.config().clone();
    let p = prepare(&config, ex)?;
    let chunks: Vec<_> = make_chunks(p.frames, chunk_len).into_iter().map(|r| (0, r)).collect();
    let (batch, _) = assemble(&config, &[p], &chunks)?;
    model.forward(&batch, Mode::Infer)
}

/// Mean squared error over every target element of `examples`, infer mode.
pub fn evaluate_mse(model: &mut Model<f32>, examples: &[TrainExample], chunk_len: usize) -> Result<f64> {
    let mut sse = 0.0;
    let mut count = 0usize;
    for ex in examples {
        let y = predict(model, ex, chunk_len)?;
        let t = Tensor::from_vec(y.shape(), ex.targets.clone())?;
        let (mse, _) = mse_loss(&y, &t)?;
        sse += mse * y.len() as f64;
        count += y.len();
    }
    if count == 0 {
        return Err(Error::invalid("no frames to evaluate"));
    }
    Ok(sse / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    EarlyStopped,
    MaxEpochs,
    TargetReached,
    Diverged { epoch: usize },
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::EarlyStopped => f.write_str("early stopping"),
            StopReason::MaxEpochs => f.write_str("max epochs reached"),
            StopReason::TargetReached => f.write_str("target training MSE reached"),
            StopReason::Diverged { epoch } => write!(f, "diverged at epoch {epoch}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// 1-based epoch whose parameters were kept (0 if none completed).
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub wall_time_secs: f64,
}

impl TrainReport {
    pub fn val_history(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_mse).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,val_mse\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_mse, e.val_mse));
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "epochs run: {}\nstop reason: {}\nbest epoch: {}\nbest validation MSE: {}\nwall time (s): {:.1}\n",
            self.epochs.len(),
            self.stop_reason,
            self.best_epoch,
            self.best_val_mse,
            self.wall_time_secs
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MSE.
    pub model: Model<f32>,
    pub report: TrainReport,
}

fn batches(chunks: Vec<(usize, Range<usize>)>, batch_size: usize) -> Vec<Vec<(usize, Range<usize>)>> {
    let mut out: Vec<Vec<_>> = chunks.chunks(batch_size).map(|c| c.to_vec()).collect();
    // Train-mode batch norm needs two rows; fold a one-frame tail into its predecessor.
    if out.len() > 1 && out.last().is_some_and(|b| b.iter().map(|(_, r)| r.len()).sum::<usize>() < 2) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(tail);
    }
    out
}

/// Minibatch Adam with truncated BPTT over `bptt_steps` chunks, validation
/// after every epoch and best-epoch parameter retention.
pub fn train(model: Model<f32>, train: &[TrainExample], val: &[TrainExample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(model, train, val, cfg, |_| {})
}

pub fn train_with_progress(
    mut model: Model<f32>,
    train: &[TrainExample],
    val: &[TrainExample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let config = model.config().clone();
    let data = train.iter().map(|ex| prepare(&config, ex)).collect::<Result<Vec<_>>>()?;
    if data.iter().map(|p| p.frames).sum::<usize>() < 2 {
        return Err(Error::invalid("training set needs at least two frames"));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model);
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let chunks: Vec<_> = order
            .iter()
            .flat_map(|&u| make_chunks(data[u].frames, cfg.bptt_steps).into_iter().map(move |r| (u, r)))
            .collect();
        let mut sse = 0.0;
        let mut count = 0usize;
        for group in batches(chunks, cfg.batch_size) {
            let (batch, target) = assemble(&config, &data, &group)?;
            let y = model.forward(&batch, Mode::Train)?;
            let (loss, grad) = mse_loss(&y, &target)?;
            if !loss.is_finite() {
                stop_reason = StopReason::Diverged { epoch };
                break 'epochs;
            }
            sse += loss * y.len() as f64;
            count += y.len();
            model.backward(&grad)?;
            clip_grad_norm(&mut model, cfg.clip_norm);
            match adam_step(&mut model, &mut adam, cfg) {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => {
                    stop_reason = StopReason::Diverged { epoch };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let train_mse = sse / count as f64;
        let val_mse = evaluate_mse(&mut model, val, cfg.bptt_steps)?;
        if !val_mse.is_finite() {
            stop_reason = StopReason::Diverged { epoch };
            break;
        }
        let record = EpochRecord {
            epoch,
            train_mse,
            val_mse,
        };
        on_epoch(&record);
        epochs.push(record);
        if val_mse < best_val {
            best_val = val_mse;
            best_epoch = epoch;
            best = model.clone();
        }
        if cfg.target_train_mse.is_some_and(|t| train_mse < t) {
            stop_reason = StopReason::TargetReached;
            break;
        }
        if cfg.early_stopping {
            let history: Vec<f64> = epochs.iter().map(|e: &EpochRecord| e.val_mse).collect();
            if early_stop_check(&history, cfg.patience_epochs, cfg.min_rel_improvement) == EarlyStop::Stop {
                stop_reason = StopReason::EarlyStopped;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best,
        report: TrainReport {
            epochs,
            stop_reason,
            best_epoch,
            best_val_mse: best_val,
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, ModelKind};
    use crate::nn::Module;
    use rand::Rng;

    fn toy_examples(config: &ModelConfig, count: usize, seed: u64) -> Vec<TrainExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pix = config.image_size * config.image_size;
        (0..count)
            .map(|k| {
                let t = rng.random_range(15..40);
                let inputs: Vec<f32> = (0..t * config.audio_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                // Targets are a fixed smooth function of the inputs so there is something to learn.
                let targets = (0..t)
                    .flat_map(|f| {
                        let x = &inputs[f * config.audio_dim..(f + 1) * config.audio_dim];
                        (0..config.output_dim).map(move |j| x[j % x.len()] * 0.8 + 0.1 * (j as f32 / 10.0).sin())
                    })
                    .collect();
                let images = config
                    .kind
                    .uses_images()
                    .then(|| (0..t * pix).map(|_| rng.random::<u8>()).collect());
                TrainExample {
                    id: format!("u{k}"),
                    inputs,
                    images,
                    targets,
                }
            })
            .collect()
    }

    fn params(m: &Model<f32>) -> Vec<f32> {
        let mut v = Vec::new();
        m.visit_params(&mut |p| v.extend_from_slice(p.value.data()));
        v
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            max_epochs: 4,
            batch_size: 4,
            early_stopping: false,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let cfg_m = ModelConfig::reduced(ModelKind::SingleBilstm);
        let data = toy_examples(&cfg_m, 4, 1);
        let model: Model<f32> = build_model(&cfg_m, 2).unwrap();
        let before = params(&model);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..quick_config()
        };
        let out = train(model, &data[..3], &data[3..], &cfg).unwrap();
        assert_eq!(params(&out.model), before);
        assert_eq!(out.report.epochs.len(), 4);
    }

    #[test]
    fn training_reduces_loss_and_keeps_best_epoch() {
        for kind in ModelKind::ALL {
            let cfg_m = ModelConfig::reduced(kind);
            let data = toy_examples(&cfg_m, 6, 3);
            let model: Model<f32> = build_model(&cfg_m, 5).unwrap();
            let cfg = TrainConfig {
                max_epochs: 6,
                learning_rate: 3e-3,
                ..quick_config()
            };
            let mut out = train(model, &data[..5], &data[5..], &cfg).unwrap();
            let r = &out.report;
            assert_eq!(r.epochs.len(), 6);
            let first = r.epochs[0].train_mse;
            let last = r.epochs.last().unwrap().train_mse;
            assert!(last < first, "{kind}: {first} -> {last}");
            let min_val = r.val_history().into_iter().fold(f64::INFINITY, f64::min);
            assert_eq!(r.best_val_mse, min_val);
            assert_eq!(r.epochs[r.best_epoch - 1].val_mse, min_val);
            let recomputed = evaluate_mse(&mut out.model, &data[5..], cfg.bptt_steps).unwrap();
            assert_eq!(recomputed, min_val, "{kind}");
        }
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let cfg_m = ModelConfig::reduced(ModelKind::Bimodal);
        let data = toy_examples(&cfg_m, 4, 7);
        let run = || {
            let model: Model<f32> = build_model(&cfg_m, 9).unwrap();
            let out = train(model, &data[..3], &data[3..], &quick_config()).unwrap();
            (params(&out.model), out.report.to_csv())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn target_mse_and_early_stopping_end_training() {
        let cfg_m = ModelConfig::reduced(ModelKind::SingleDnn);
        let data = toy_examples(&cfg_m, 3, 8);
        let model: Model<f32> = build_model(&cfg_m, 1).unwrap();
        let cfg = TrainConfig {
            target_train_mse: Some(1e9),
            ..quick_config()
        };
        let out = train(model.clone(), &data[..2], &data[2..], &cfg).unwrap();
        assert_eq!(out.report.stop_reason, StopReason::TargetReached);
        assert_eq!(out.report.epochs.len(), 1);

        let cfg = TrainConfig {
            learning_rate: 0.0,
            early_stopping: true,
            max_epochs: 50,
            ..quick_config()
        };
        let out = train(model, &data[..2], &data[2..], &cfg).unwrap();
        assert_eq!(out.report.stop_reason, StopReason::EarlyStopped);
        assert_eq!(out.report.epochs.len(), 6);
    }

    #[test]
    fn non_finite_loss_reports_divergence() {
        let cfg_m = ModelConfig::reduced(ModelKind::SingleDnn);
        let mut data = toy_examples(&cfg_m, 3, 8);
        data[0].targets[0] = f32::INFINITY;
        let model: Model<f32> = build_model(&cfg_m, 1).unwrap();
        let out = train(model, &data[..2], &data[2..], &quick_config()).unwrap();
        assert!(matches!(out.report.stop_reason, StopReason::Diverged { .. }), "{:?}", out.report.stop_reason);
    }

    #[test]
    fn malformed_examples_are_rejected() {
        let cfg_m = ModelConfig::reduced(ModelKind::Bimodal);
        let mut data = toy_examples(&cfg_m, 3, 2);
        data[0].images = None;
        let model: Model<f32> = build_model(&cfg_m, 1).unwrap();
        assert!(train(model.clone(), &data[..2], &data[2..], &quick_config()).is_err());
        assert!(train(model, &[], &data[2..], &quick_config()).is_err());
    }

    #[test]
    fn chunked_prediction_covers_every_frame() {
        let cfg_m = ModelConfig::reduced(ModelKind::SingleDnn);
        let data = toy_examples(&cfg_m, 1, 4);
        let mut model: Model<f32> = build_model(&cfg_m, 1).unwrap();
        let t = data[0].frames(cfg_m.output_dim);
        let y = predict(&mut model, &data[0], 7).unwrap();
        assert_eq!(y.shape(), &[t, cfg_m.output_dim]);
        // Infer-mode feed-forward output does not depend on chunking.
        let whole = predict(&mut model, &data[0], 1000).unwrap();
        assert_eq!(y.data(), whole.data());
    }

    #[test]
    fn report_csv_has_one_row_per_epoch() {
        let r = TrainReport {
            epochs: vec![
                EpochRecord {
                    epoch: 1,
                    train_mse: 0.5,
                    val_mse: 0.25,
                },
                EpochRecord {
                    epoch: 2,
                    train_mse: 0.4,
                    val_mse: 0.2,
                },
            ],
            stop_reason: StopReason::MaxEpochs,
            best_epoch: 2,
            best_val_mse: 0.2,
            wall_time_secs: 1.0,
        };
        assert_eq!(r.to_csv(), "epoch,train_mse,val_mse\n1,0.5,0.25\n2,0.4,0.2\n");
        assert!(r.summary().contains("best epoch: 2"));
    }
}
