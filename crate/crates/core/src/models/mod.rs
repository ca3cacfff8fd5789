//! The three enhancement architectures, parameter accounting and checkpoints.

mod blocks;
pub mod checkpoint;
mod config;

use std::hash::{DefaultHasher, Hasher};
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use blocks::{ConvStage, DenseBlock, DenseStack, ImageCnn};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{ConvStageConfig, ModelConfig, ModelKind};

use crate::nn::lstm::validate_segments;
use crate::nn::{gradient_check, Evaluation, GradCheckOptions, GradCheckReport, Linear, Lstm, Mode, Module, Param, Real, Tensor};
use crate::train::mse_loss;
use crate::{Error, Result};

/// Rows of one forward pass.
///
/// `audio` is `[N × audio_input_dim]`, `images` (bimodal only) `[N × 1 × S × S]`.
/// For recurrent models `segments` partitions the rows into independent
/// sequences; the feed-forward model ignores it.
#[derive(Clone, Debug)]
pub struct Batch<R> {
    pub audio: Tensor<R>,
    pub images: Option<Tensor<R>>,
    pub segments: Vec<Range<usize>>,
}

impl<R: Real> Batch<R> {
    /// A single sequence covering every row.
    pub fn sequence(audio: Tensor<R>, images: Option<Tensor<R>>) -> Self {
        let n = audio.rows();
        Self {
            audio,
            images,
            segments: vec![0..n],
        }
    }
}

#[derive(Clone, Debug)]
pub enum Head<R> {
    /// Extra hidden layers and a linear projection (single-channel DNN).
    Dense { hidden: DenseStack<R>, out: Linear<R> },
    /// Forward and time-reversed LSTMs whose outputs are summed, then a linear projection.
    Recurrent { forward: Lstm<R>, backward: Lstm<R>, out: Linear<R> },
}

#[derive(Clone, Debug)]
pub struct Model<R> {
    config: ModelConfig,
    pub audio: DenseStack<R>,
    pub image: Option<ImageCnn<R>>,
    pub head: Head<R>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub weights_biases: usize,
    pub batchnorm_affine: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.weights_biases + self.batchnorm_affine
    }
}

/// Builds a model with weights drawn deterministically from `seed`.
pub fn build_model<R: Real>(config: &ModelConfig, seed: u64) -> Result<Model<R>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut audio_dims = vec![config.audio_input_dim()];
    audio_dims.extend(&config.audio_hidden);
    audio_dims.push(config.audio_out_dim);
    let audio = DenseStack::new("audio", &audio_dims, false, &mut rng);

    let image = if config.kind.uses_images() {
        let mut c_in = 1;
        let mut stages = Vec::with_capacity(config.cnn_stages.len());
        for (i, s) in config.cnn_stages.iter().enumerate() {
            let mut stage = ConvStage::new(
                &format!("image.stage{i}"),
                c_in,
                s.channels,
                s.kernel,
                s.pool_kernel,
                s.pool_stride,
                &mut rng,
            );
            stage.conv.propagate_input_grad = i > 0;
            stages.push(stage);
            c_in = s.channels;
        }
        let flat = config.cnn_flat_dim()?;
        let mut dims = vec![flat];
        dims.extend(&config.image_hidden);
        dims.push(config.image_out_dim);
        let dense = DenseStack::new("image.fc", &dims, true, &mut rng);
        Some(ImageCnn::new(stages, dense, flat))
    } else {
        None
    };

    let head = match config.kind {
        ModelKind::SingleDnn => {
            let mut dims = vec![config.audio_out_dim];
            dims.extend(&config.dnn_head_hidden);
            let last = *dims.last().expect("non-empty");
            Head::Dense {
                hidden: DenseStack::new("head", &dims, true, &mut rng),
                out: Linear::new("out", last, config.output_dim, &mut rng),
            }
        }
        ModelKind::SingleBilstm | ModelKind::Bimodal => {
            let d = config.lstm_input_dim();
            let h = config.lstm_hidden;
            Head::Recurrent {
                forward: Lstm::new("lstm.fwd", d, h, false, &mut rng),
                backward: Lstm::new("lstm.bwd", d, h, true, &mut rng),
                out: Linear::new("out", h, config.output_dim, &mut rng),
            }
        }
    };
    Ok(Model {
        config: config.clone(),
        audio,
        image,
        head,
    })
}

fn concat_columns<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Result<Tensor<R>> {
    if a.rows() != b.rows() {
        return Err(Error::shape("concat", a.shape(), b.shape()));
    }
    let (da, db) = (a.row_len(), b.row_len());
    let mut out = Vec::with_capacity(a.len() + b.len());
    for r in 0..a.rows() {
        out.extend_from_slice(a.row(r));
        out.extend_from_slice(b.row(r));
    }
    Tensor::from_vec(&[a.rows(), da + db], out)
}

fn split_columns<R: Real>(x: &Tensor<R>, left: usize) -> Result<(Tensor<R>, Tensor<R>)> {
    let (n, d) = (x.rows(), x.row_len());
    let right = d - left;
    let mut a = Vec::with_capacity(n * left);
    let mut b = Vec::with_capacity(n * right);
    for r in 0..n {
        let row = x.row(r);
        a.extend_from_slice(&row[..left]);
        b.extend_from_slice(&row[left..]);
    }
    Ok((Tensor::from_vec(&[n, left], a)?, Tensor::from_vec(&[n, right], b)?))
}

impl<R: Real> Model<R> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// Predicts `[N × output_dim]` standardized log-power frames.
    pub fn forward(&mut self, batch: &Batch<R>, mode: Mode) -> Result<Tensor<R>> {
        let cfg = &self.config;
        if batch.audio.shape().len() != 2 || batch.audio.row_len() != cfg.audio_input_dim() {
            return Err(Error::shape("model audio input", batch.audio.shape(), &[0, cfg.audio_input_dim()]));
        }
        let n = batch.audio.rows();
        if n == 0 {
            return Err(Error::invalid("empty input sequence"));
        }
        let a = self.audio.forward(&batch.audio, mode)?;
        let features = match (&mut self.image, &batch.images) {
            (Some(cnn), Some(images)) => {
                let s = cfg.image_size;
                if images.shape() != [n, 1, s, s] {
                    return Err(Error::shape("model image input", images.shape(), &[n, 1, s, s]));
                }
                let i = cnn.forward(images, mode)?;
                concat_columns(&a, &i)?
            }
            (Some(_), None) => return Err(Error::invalid("bimodal model needs an image sequence")),
            (None, Some(_)) => return Err(Error::invalid("audio-only model was given images")),
            (None, None) => a,
        };
        match &mut self.head {
            Head::Dense { hidden, out } => {
                let h = hidden.forward(&features, mode)?;
                out.forward(&h)
            }
            Head::Recurrent { forward, backward, out } => {
                validate_segments(&batch.segments, n)?;
                let mut z = forward.forward(&features, &batch.segments)?;
                z.add_assign(&backward.forward(&features, &batch.segments)?)?;
                out.forward(&z)
            }
        }
    }

    /// Accumulates parameter gradients for `grad` = ∂loss/∂output of the last forward.
    pub fn backward(&mut self, grad: &Tensor<R>) -> Result<()> {
        let g = match &mut self.head {
            Head::Dense { hidden, out } => {
                let g = out.backward(grad)?;
                hidden.backward(&g)?.expect("head propagates to its input")
            }
            Head::Recurrent { forward, backward, out } => {
                let gz = out.backward(grad)?;
                let mut g = forward.backward(&gz)?;
                g.add_assign(&backward.backward(&gz)?)?;
                g
            }
        };
        match &mut self.image {
            Some(cnn) => {
                let (ga, gi) = split_columns(&g, self.config.audio_out_dim)?;
                self.audio.backward(&ga)?;
                cnn.backward(&gi)?;
            }
            None => {
                self.audio.backward(&g)?;
            }
        }
        Ok(())
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind() != kind {
            return Err(Error::invalid(format!("model is {}, not {}", self.kind(), kind)));
        }
        Ok(())
    }

    /// `[B × 11·D]` context windows → `[B × output_dim]` centre-frame predictions.
    pub fn forward_single_dnn(&mut self, windows: &Tensor<R>, mode: Mode) -> Result<Tensor<R>> {
        self.expect_kind(ModelKind::SingleDnn)?;
        self.forward(&Batch::sequence(windows.clone(), None), mode)
    }

    /// `[T × D]` audio sequence → `[T × output_dim]`.
    pub fn forward_single_bilstm(&mut self, audio: &Tensor<R>, mode: Mode) -> Result<Tensor<R>> {
        self.expect_kind(ModelKind::SingleBilstm)?;
        self.forward(&Batch::sequence(audio.clone(), None), mode)
    }

    /// `[T × D]` audio and `[T × 1 × S × S]` lip images → `[T × output_dim]`.
    pub fn forward_bimodal(&mut self, audio: &Tensor<R>, images: &Tensor<R>, mode: Mode) -> Result<Tensor<R>> {
        self.expect_kind(ModelKind::Bimodal)?;
        if images.shape().first() != audio.shape().first() {
            return Err(Error::shape("bimodal time alignment", audio.shape(), images.shape()));
        }
        self.forward(&Batch::sequence(audio.clone(), Some(images.clone())), mode)
    }

    /// Hash of every ReLU mask and pooling argmax from the last forward pass.
    pub fn regime_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.audio.hash_regime(&mut h);
        if let Some(cnn) = &self.image {
            cnn.hash_regime(&mut h);
        }
        if let Head::Dense { hidden, .. } = &self.head {
            hidden.hash_regime(&mut h);
        }
        h.finish()
    }

    pub fn param_count(&self) -> ParamCount {
        let mut count = ParamCount {
            weights_biases: 0,
            batchnorm_affine: 0,
        };
        self.visit_params(&mut |p| {
            if p.name.ends_with(".gamma") || p.name.ends_with(".beta") {
                count.batchnorm_affine += p.len();
            } else {
                count.weights_biases += p.len();
            }
        });
        count
    }

    /// Global L2 norm of all parameter gradients.
    pub fn grad_norm(&self) -> f64 {
        let mut sq = 0.0;
        self.visit_params(&mut |p| sq += p.grad.sum_sq());
        sq.sqrt()
    }

    /// Copies weights, biases and batch-norm statistics into another precision.
    pub fn cast<S: Real>(&self) -> Model<S> {
        let mut out: Model<S> = build_model(&self.config, 0).expect("config already validated");
        let mut values = Vec::new();
        self.visit_params(&mut |p| values.push(p.value.cast::<S>()));
        let mut it = values.into_iter();
        out.visit_params_mut(&mut |p| p.value = it.next().expect("same architecture"));
        let mut buffers = Vec::new();
        self.visit_buffers(&mut |b| buffers.push(b.cast::<S>()));
        let mut it = buffers.into_iter();
        out.visit_buffers_mut(&mut |b| *b = it.next().expect("same architecture"));
        out
    }
}

impl<R: Real> Module<R> for Model<R> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<R>)) {
        self.audio.visit_params(f);
        if let Some(cnn) = &self.image {
            cnn.visit_params(f);
        }
        match &self.head {
            Head::Dense { hidden, out } => {
                hidden.visit_params(f);
                out.visit_params(f);
            }
            Head::Recurrent { forward, backward, out } => {
                forward.visit_params(f);
                backward.visit_params(f);
                out.visit_params(f);
            }
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<R>)) {
        self.audio.visit_params_mut(f);
        if let Some(cnn) = &mut self.image {
            cnn.visit_params_mut(f);
        }
        match &mut self.head {
            Head::Dense { hidden, out } => {
                hidden.visit_params_mut(f);
                out.visit_params_mut(f);
            }
            Head::Recurrent { forward, backward, out } => {
                forward.visit_params_mut(f);
                backward.visit_params_mut(f);
                out.visit_params_mut(f);
            }
        }
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&Tensor<R>)) {
        self.audio.visit_buffers(f);
        if let Some(cnn) = &self.image {
            cnn.visit_buffers(f);
        }
        if let Head::Dense { hidden, .. } = &self.head {
            hidden.visit_buffers(f);
        }
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<R>)) {
        self.audio.visit_buffers_mut(f);
        if let Some(cnn) = &mut self.image {
            cnn.visit_buffers_mut(f);
        }
        if let Head::Dense { hidden, .. } = &mut self.head {
            hidden.visit_buffers_mut(f);
        }
    }
}

/// Stacks each frame with its `n/2` neighbours on either side (edge frames
/// replicated): `[T × D]` → `[T × n·D]`.
pub fn context_windows(frames: &[f64], dim: usize, n: usize) -> Result<Vec<f64>> {
    if dim == 0 || frames.len() % dim != 0 || n % 2 == 0 {
        return Err(Error::invalid(format!(
            "context window needs whole [T × {dim}] frames and an odd width, got width {n}"
        )));
    }
    let t = frames.len() / dim;
    let half = (n / 2) as isize;
    let mut out = Vec::with_capacity(t * n * dim);
    for i in 0..t as isize {
        for k in -half..=half {
            let j = (i + k).clamp(0, t as isize - 1) as usize;
            out.extend_from_slice(&frames[j * dim..(j + 1) * dim]);
        }
    }
    Ok(out)
}

/// Random batch of `sequences` independent sequences of `steps` frames each.
pub fn random_batch<R: Real>(config: &ModelConfig, sequences: usize, steps: usize, seed: u64) -> Batch<R> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sequences * steps;
    let audio = Tensor::uniform(&[n, config.audio_input_dim()], 1.0, &mut rng);
    let images = config.kind.uses_images().then(|| {
        let s = config.image_size;
        Tensor::uniform(&[n, 1, s, s], 0.5, &mut rng).map(|v| v + R::of(0.5))
    });
    Batch {
        audio,
        images,
        segments: (0..sequences).map(|k| k * steps..(k + 1) * steps).collect(),
    }
}

/// Finite-difference check of every model parameter under an MSE loss
/// against random targets, with batch norm in training mode.
pub fn check_model_gradients(
    config: &ModelConfig,
    seed: u64,
    sequences: usize,
    steps: usize,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut model: Model<f64> = build_model(config, seed)?;
    let batch = random_batch::<f64>(config, sequences, steps, seed ^ 0x9e37_79b9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let target = Tensor::<f64>::uniform(&[sequences * steps, config.output_dim], 1.0, &mut rng);
    gradient_check(
        &mut model,
        |m| {
            let y = m.forward(&batch, Mode::Train)?;
            Ok(Evaluation {
                loss: mse_loss(&y, &target)?.0,
                regime: m.regime_signature(),
            })
        },
        |m| {
            let y = m.forward(&batch, Mode::Train)?;
            let (_, g) = mse_loss(&y, &target)?;
            m.backward(&g)
        },
        opts,
    )
}
