use std::sync::Arc;

use crate::data::LipFrames;
use crate::dsp::{istft, stft, AudioSignal, SpectralFrameSequence, N_BINS, SAMPLE_RATE};
use crate::models::{Checkpoint, Model};
use crate::dsp::FeaturePipeline;
use crate::train::{predict, TrainExample};
use crate::{Error, Result};

/// Enhanced waveform plus the predicted spectra it was synthesized from.
#[derive(Clone, Debug, PartialEq)]
pub struct Enhanced {
    pub signal: AudioSignal,
    /// Network output in standardized units, `[T × 161]`.
    pub standardized: Vec<f64>,
    /// De-standardized natural-log power, `[T × 161]`.
    pub log_power: Vec<f64>,
}

/// Owns a private copy of the model so one checkpoint can serve many calls.
pub struct Enhancer<'a> {
    model: Model<f32>,
    features: &'a FeaturePipeline,
    context_len: usize,
}

impl<'a> Enhancer<'a> {
    pub fn new(checkpoint: &'a Checkpoint) -> Self {
        Self {
            model: checkpoint.model.clone(),
            features: &checkpoint.features,
            context_len: checkpoint.context_len,
        }
    }

    pub fn features(&self) -> &FeaturePipeline {
        self.features
    }

    /// Standardized prediction for an already analyzed input.
    pub fn predict_spectrum(
        &mut self,
        id: &str,
        noisy: &SpectralFrameSequence,
        images: Option<Arc<[u8]>>,
    ) -> Result<Vec<f64>> {
        let config = self.model.config();
        if config.kind.uses_images() && images.is_none() {
            return Err(Error::invalid(format!("{id}: bimodal checkpoint needs lip frames")));
        }
        let images = if config.kind.uses_images() { images } else { None };
        let ex = TrainExample {
            id: id.to_string(),
            inputs: self.features.inputs(noisy)?.into_iter().map(|v| v as f32).collect(),
            images,
            targets: vec![0.0; noisy.frames * config.output_dim],
        };
        let y = predict(&mut self.model, &ex, self.context_len)?;
        Ok(y.data().iter().map(|&v| v as f64).collect())
    }

    pub fn enhance(&mut self, corrupted: &AudioSignal, lips: Option<&LipFrames>) -> Result<Enhanced> {
        if corrupted.sample_rate != SAMPLE_RATE {
            return Err(Error::invalid(format!(
                "expected {SAMPLE_RATE} Hz audio, got {} Hz",
                corrupted.sample_rate
            )));
        }
        let noisy = stft(corrupted)?;
        if let Some(l) = lips {
            if l.frames != noisy.frames {
                return Err(Error::invalid(format!(
                    "{} lip frames but {} audio frames",
                    l.frames, noisy.frames
                )));
            }
        }
        let images = lips.map(|l| Arc::from(l.pixels.as_slice()));
        let standardized = self.predict_spectrum("input", &noisy, images)?;
        self.synthesize(&noisy, standardized)
    }

    /// Noisy-phase resynthesis of a standardized prediction.
    pub fn synthesize(&self, noisy: &SpectralFrameSequence, standardized: Vec<f64>) -> Result<Enhanced> {
        if standardized.len() != noisy.frames * N_BINS {
            return Err(Error::shape("synthesize", &[standardized.len()], &[noisy.frames * N_BINS]));
        }
        let log_power = self.features.log_power(standardized.clone());
        let mut signal = istft(&noisy.with_log_power(log_power.clone())?)?;
        for s in &mut signal.samples {
            *s = if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 };
        }
        Ok(Enhanced {
            signal,
            standardized,
            log_power,
        })
    }
}

/// One-shot enhancement; bimodal checkpoints require `lips`.
pub fn enhance(checkpoint: &Checkpoint, corrupted: &AudioSignal, lips: Option<&LipFrames>) -> Result<Enhanced> {
    Enhancer::new(checkpoint).enhance(corrupted, lips)
}
