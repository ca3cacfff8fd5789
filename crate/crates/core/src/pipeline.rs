//! Glue between the corpus, the feature front-end and the trainer.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::data::{LipFrames, Utterance};
use crate::dsp::{stft, FeaturePipeline, SpectralFrameSequence};
use crate::models::{build_model, Checkpoint, ModelConfig, ModelKind};
use crate::train::{split_train_val, train_with_progress, EpochRecord, TrainConfig, TrainExample, TrainReport};
use crate::{Error, Result};

/// Everything needed to train one model from a loaded corpus.
#[derive(Clone, Debug)]
pub struct TrainJob {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub model_seed: u64,
}

impl TrainJob {
    /// Full-size model of `kind`; `seed` drives both initialization and batching.
    pub fn standard(kind: ModelKind, train: TrainConfig) -> Self {
        let model_seed = train.seed;
        Self {
            model: ModelConfig::standard(kind),
            train,
            model_seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

/// Noisy and clean spectra of one utterance. Phase is dropped: training only
/// needs log power.
struct Analyzed {
    noisy: SpectralFrameSequence,
    clean: SpectralFrameSequence,
}

fn analyze(u: &Utterance) -> Result<Analyzed> {
    let strip = |mut s: SpectralFrameSequence| {
        s.phase = Vec::new();
        s
    };
    Ok(Analyzed {
        noisy: strip(stft(&u.corrupted)?),
        clean: strip(stft(&u.clean)?),
    })
}

/// Splits utterance indices into train and validation by clean source, so
/// that corruptions of one recording never straddle the split.
pub fn grouped_split(utts: &[Utterance], val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut order = Vec::new();
    let mut seen = BTreeSet::new();
    for u in utts {
        if seen.insert(u.record.source_id()) {
            order.push(u.record.source_id());
        }
    }
    let (_, val_groups) = split_train_val(order.len(), val_fraction, seed)?;
    let val: BTreeSet<&str> = val_groups.iter().map(|&g| order[g]).collect();
    let (v, t): (Vec<usize>, Vec<usize>) = (0..utts.len()).partition(|&i| val.contains(utts[i].record.source_id()));
    Ok((t, v))
}

/// Network-ready example; `lips` is attached only when `with_images`.
pub fn to_example(
    id: &str,
    noisy: &SpectralFrameSequence,
    clean: &SpectralFrameSequence,
    images: Option<Arc<[u8]>>,
    features: &FeaturePipeline,
) -> Result<TrainExample> {
    if noisy.frames != clean.frames {
        return Err(Error::invalid(format!("{id}: noisy and clean frame counts differ")));
    }
    let f32s = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<f32>>();
    Ok(TrainExample {
        id: id.to_string(),
        inputs: f32s(features.inputs(noisy)?),
        images,
        targets: f32s(features.targets(clean)),
    })
}

/// Shares one pixel buffer between all corruptions of a clean recording.
#[derive(Default)]
pub(crate) struct LipCache(HashMap<*const LipFrames, Arc<[u8]>>);

impl LipCache {
    pub(crate) fn get(&mut self, lips: &Arc<LipFrames>) -> Arc<[u8]> {
        self.0
            .entry(Arc::as_ptr(lips))
            .or_insert_with(|| Arc::from(lips.pixels.as_slice()))
            .clone()
    }
}

/// Fits features on the training portion, trains, and packages a checkpoint
/// whose inference chunk length equals the training sequence length.
pub fn train_model(utts: &[Utterance], job: &TrainJob, on_epoch: impl FnMut(&EpochRecord)) -> Result<Trained> {
    job.train.validate()?;
    let (train_idx, val_idx) = grouped_split(utts, job.train.val_fraction, job.train.seed)?;
    let analyzed = utts.iter().map(analyze).collect::<Result<Vec<_>>>()?;

    let (noisy, clean): (Vec<_>, Vec<_>) = train_idx
        .iter()
        .map(|&i| (analyzed[i].noisy.clone(), analyzed[i].clean.clone()))
        .unzip();
    let features = FeaturePipeline::fit(&noisy, &clean, job.model.audio_dim)?;
    drop((noisy, clean));

    let with_images = job.model.kind.uses_images();
    let mut lips = LipCache::default();
    let mut examples = |idx: &[usize]| -> Result<Vec<TrainExample>> {
        idx.iter()
            .map(|&i| {
                let u = &utts[i];
                let images = with_images.then(|| lips.get(&u.lips));
                to_example(&u.record.id, &analyzed[i].noisy, &analyzed[i].clean, images, &features)
            })
            .collect()
    };
    let train_set = examples(&train_idx)?;
    let val_set = examples(&val_idx)?;
    drop(analyzed);

    let model = build_model::<f32>(&job.model, job.model_seed)?;
    let outcome = train_with_progress(model, &train_set, &val_set, &job.train, on_epoch)?;
    Ok(Trained {
        checkpoint: Checkpoint {
            model: outcome.model,
            features,
            context_len: job.train.bptt_steps,
        },
        report: outcome.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_corpus, load_dataset, CorpusSpec, Split};

    fn corpus(dir: &std::path::Path) -> Vec<Utterance> {
        let spec = CorpusSpec {
            n_train: 10,
            n_test: 1,
            min_duration_s: 0.5,
            max_duration_s: 0.7,
            noise_clip_s: 2.0,
            seed: 4,
        };
        build_corpus(&spec, dir).unwrap();
        load_dataset(dir.join("train.tsv")).unwrap().utterances
    }

    #[test]
    fn grouped_split_keeps_sources_together() {
        let dir = tempfile::tempdir().unwrap();
        let utts = corpus(dir.path());
        assert!(utts.iter().all(|u| u.record.split == Split::Train));
        let (t, v) = grouped_split(&utts, 0.2, 3).unwrap();
        assert_eq!(t.len() + v.len(), utts.len());
        assert!(!v.is_empty());
        let val_sources: BTreeSet<_> = v.iter().map(|&i| utts[i].record.source_id()).collect();
        assert!(t.iter().all(|&i| !val_sources.contains(utts[i].record.source_id())));
    }

    #[test]
    fn lip_buffers_are_shared_across_corruptions() {
        let dir = tempfile::tempdir().unwrap();
        let utts = corpus(dir.path());
        let mut cache = LipCache::default();
        let a = cache.get(&utts[0].lips);
        let b = cache.get(&utts[1].lips);
        assert_eq!(utts[0].record.source_id(), utts[1].record.source_id());
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn reduced_bimodal_trains_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let utts = corpus(dir.path());
        let mut model = ModelConfig::reduced(ModelKind::Bimodal);
        model.image_size = 64;
        model.cnn_stages = ModelConfig::standard(ModelKind::Bimodal).cnn_stages;
        model.output_dim = crate::dsp::N_BINS;
        let job = TrainJob {
            model,
            train: TrainConfig {
                max_epochs: 2,
                ..TrainConfig::default()
            },
            model_seed: 1,
        };
        let mut epochs = 0;
        let trained = train_model(&utts, &job, |_| epochs += 1).unwrap();
        assert_eq!(epochs, 2);
        assert_eq!(trained.checkpoint.features.input_dim(), job.model.audio_dim);
        assert!(trained.report.best_val_mse.is_finite());
    }
}
