//! Network input and target features derived from spectral frames.
//!
//! Inputs: noisy log power → `[static | Δ | ΔΔ]` → PCA → standardize.
//! Targets: clean log power standardized per bin (no PCA).

use super::{delta_features, PcaModel, SpectralFrameSequence, Standardizer, N_BINS};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePipeline {
    pub pca: PcaModel,
    pub input: Standardizer,
    pub target: Standardizer,
}

fn stacked_deltas(spec: &SpectralFrameSequence) -> Vec<f64> {
    delta_features(&spec.log_power, N_BINS)
}

impl FeaturePipeline {
    /// Fits PCA and both standardizers on training utterances only.
    pub fn fit(noisy: &[SpectralFrameSequence], clean: &[SpectralFrameSequence], pca_dim: usize) -> Result<Self> {
        if noisy.len() != clean.len() {
            return Err(Error::invalid(format!(
                "{} noisy utterances but {} clean ones",
                noisy.len(),
                clean.len()
            )));
        }
        if let Some((i, _)) = noisy.iter().zip(clean).enumerate().find(|(_, (n, c))| n.frames != c.frames) {
            return Err(Error::invalid(format!("utterance {i}: noisy and clean frame counts differ")));
        }
        let raw: Vec<f64> = noisy.iter().flat_map(stacked_deltas).collect();
        let pca = PcaModel::fit(&raw, 3 * N_BINS, pca_dim)?;
        let projected = pca.transform_rows(&raw)?;
        let input = Standardizer::fit(&projected, pca_dim)?;
        let targets: Vec<f64> = clean.iter().flat_map(|c| c.log_power.iter().copied()).collect();
        let target = Standardizer::fit(&targets, N_BINS)?;
        Ok(Self { pca, input, target })
    }

    pub fn input_dim(&self) -> usize {
        self.pca.output_dim
    }

    /// Standardized PCA features, `[T × input_dim]`.
    pub fn inputs(&self, noisy: &SpectralFrameSequence) -> Result<Vec<f64>> {
        let mut x = self.pca.transform_rows(&stacked_deltas(noisy))?;
        self.input.apply(&mut x);
        Ok(x)
    }

    /// Standardized clean log power, `[T × 161]`.
    pub fn targets(&self, clean: &SpectralFrameSequence) -> Vec<f64> {
        let mut y = clean.log_power.clone();
        self.target.apply(&mut y);
        y
    }

    /// Maps standardized network outputs back to log power.
    pub fn log_power(&self, mut standardized: Vec<f64>) -> Vec<f64> {
        self.target.invert(&mut standardized);
        standardized
    }
}
