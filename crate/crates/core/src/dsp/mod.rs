//! Audio front-end: STFT analysis/synthesis, log power spectra, delta
//! features, PCA, standardization, SNR-controlled mixing, and WAV I/O.

pub mod delta;
pub mod features;
pub mod mix;
pub mod pca;
pub mod standardize;
pub mod stft;
pub mod wav;

pub use delta::delta_features;
pub use features::FeaturePipeline;
pub use mix::{mix_at_snr, mean_square, snr_db};
pub use pca::PcaModel;
pub use standardize::Standardizer;
pub use wav::{read_wav, write_wav};
pub use stft::{istft, stft, SpectralFrameSequence, Stft, HOP, N_BINS, N_FFT};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio at 16 kHz.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f32>) -> Self {
        Self {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }
}
