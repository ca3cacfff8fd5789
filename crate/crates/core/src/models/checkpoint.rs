//! Little-endian binary checkpoint holding a model and its feature pipeline.
//!
//! Layout (see `docs/checkpoint-format.md`):
//! `"BMBL"`, version `u32`, config block, context length `u32`,
//! parameter tensors and batch-norm buffers as length-prefixed `f32` runs,
//! then PCA, input standardizer and target standardizer as `f64` runs.

use std::path::Path;

use super::{build_model, Model, ModelConfig};
use crate::dsp::{FeaturePipeline, PcaModel, Standardizer};
use crate::nn::Module;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BMBL";
pub const VERSION: u32 = 1;

/// Everything enhancement needs besides the noisy audio (and lip frames).
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub features: FeaturePipeline,
    /// Frames per recurrent inference chunk (the training sequence length).
    pub context_len: usize,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn f32s(&mut self, xs: &[f32]) {
        self.u32(xs.len());
        for x in xs {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn f64s(&mut self, xs: &[f64]) {
        self.u32(xs.len());
        for x in xs {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format("checkpoint", format!("truncated while reading {what} at byte {}", self.pos))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f32s(&mut self, expected: usize, what: &str) -> Result<Vec<f32>> {
        let n = self.u32(what)?;
        if n != expected {
            return Err(Error::format("checkpoint", format!("{what}: expected {expected} values, found {n}")));
        }
        let b = self.take(n * 4, what)?;
        Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }

    fn f64s(&mut self, what: &str) -> Result<Vec<f64>> {
        let n = self.u32(what)?;
        let b = self.take(n.checked_mul(8).unwrap_or(usize::MAX), what)?;
        Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION as usize);
        let words = self.model.config().encode();
        w.u32(words.len());
        for &x in &words {
            w.u32(x as usize);
        }
        w.u32(self.context_len);
        self.model.visit_params(&mut |p| w.f32s(p.value.data()));
        self.model.visit_buffers(&mut |b| w.f32s(b.data()));
        let pca = &self.features.pca;
        w.u32(pca.input_dim);
        w.u32(pca.output_dim);
        w.f64s(&pca.mean);
        w.f64s(&pca.components);
        w.f64s(&pca.explained_variance);
        for s in [&self.features.input, &self.features.target] {
            w.f64s(&s.mean);
            w.f64s(&s.std);
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic (not a model checkpoint)"));
        }
        let version = r.u32("version")?;
        if version != VERSION as usize {
            return Err(Error::format("checkpoint", format!("unsupported version {version} (expected {VERSION})")));
        }
        let n_words = r.u32("config length")?;
        if n_words > 4096 {
            return Err(Error::format("checkpoint", format!("implausible config length {n_words}")));
        }
        let words = (0..n_words).map(|_| r.u32("config").map(|w| w as u32)).collect::<Result<Vec<_>>>()?;
        let config = ModelConfig::decode(&words)?;
        let context_len = r.u32("context length")?;
        let mut model: Model<f32> = build_model(&config, 0)?;
        let mut failure = None;
        model.visit_params_mut(&mut |p| {
            if failure.is_none() {
                match r.f32s(p.len(), &p.name) {
                    Ok(v) => p.value.data_mut().copy_from_slice(&v),
                    Err(e) => failure = Some(e),
                }
            }
        });
        model.visit_buffers_mut(&mut |b| {
            if failure.is_none() {
                match r.f32s(b.len(), "batch-norm statistics") {
                    Ok(v) => b.data_mut().copy_from_slice(&v),
                    Err(e) => failure = Some(e),
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let input_dim = r.u32("pca input dim")?;
        let output_dim = r.u32("pca output dim")?;
        let pca = PcaModel {
            mean: r.f64s("pca mean")?,
            components: r.f64s("pca components")?,
            explained_variance: r.f64s("pca variance")?,
            input_dim,
            output_dim,
        };
        if pca.mean.len() != input_dim
            || pca.components.len() != input_dim * output_dim
            || pca.explained_variance.len() != output_dim
        {
            return Err(Error::format("checkpoint", "PCA block sizes are inconsistent"));
        }
        let mut standardizer = |what: &str, dim: usize| -> Result<Standardizer> {
            let s = Standardizer {
                mean: r.f64s(what)?,
                std: r.f64s(what)?,
            };
            if s.mean.len() != dim || s.std.len() != dim {
                return Err(Error::format("checkpoint", format!("{what} has the wrong dimension")));
            }
            Ok(s)
        };
        let input = standardizer("input standardizer", output_dim)?;
        let target = standardizer("target standardizer", config.output_dim)?;
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint", format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if output_dim != config.audio_dim {
            return Err(Error::format("checkpoint", "PCA output does not match the model input"));
        }
        Ok(Self {
            model,
            features: FeaturePipeline { pca, input, target },
            context_len,
        })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
