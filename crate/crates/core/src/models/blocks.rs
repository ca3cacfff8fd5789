//! Layer groupings shared by the three architectures.

use std::hash::Hasher;

use rand::Rng;

use crate::nn::{BatchNorm, Conv2d, Linear, MaxPool2d, Mode, Module, Param, Real, Relu, Tensor};
use crate::Result;

/// Fully-connected layer → batch norm → ReLU.
#[derive(Clone, Debug)]
pub struct DenseBlock<R> {
    pub linear: Linear<R>,
    pub norm: BatchNorm<R>,
    relu: Relu<R>,
}

impl<R: Real> DenseBlock<R> {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            linear: Linear::new(&format!("{name}.fc"), d_in, d_out, rng),
            norm: BatchNorm::new(&format!("{name}.bn"), d_out),
            relu: Relu::new(),
        }
    }

    pub fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Result<Tensor<R>> {
        let y = self.linear.forward(x)?;
        let y = self.norm.forward(&y, mode)?;
        Ok(self.relu.forward(&y))
    }

    pub fn backward(&mut self, grad: &Tensor<R>, need_input: bool) -> Result<Option<Tensor<R>>> {
        let g = self.relu.backward(grad)?;
        let g = self.norm.backward(&g)?;
        if need_input {
            Ok(Some(self.linear.backward(&g)?))
        } else {
            self.linear.backward_params_only(&g)?;
            Ok(None)
        }
    }
}

/// A chain of [`DenseBlock`]s.
#[derive(Clone, Debug)]
pub struct DenseStack<R> {
    pub blocks: Vec<DenseBlock<R>>,
    /// Whether the stack's own input needs a gradient (false for network inputs).
    pub propagate_input_grad: bool,
}

impl<R: Real> DenseStack<R> {
    pub fn new(name: &str, dims: &[usize], propagate_input_grad: bool, rng: &mut impl Rng) -> Self {
        let blocks = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseBlock::new(&format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self {
            blocks,
            propagate_input_grad,
        }
    }

    pub fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Result<Tensor<R>> {
        let mut h = x.clone();
        for b in &mut self.blocks {
            h = b.forward(&h, mode)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Tensor<R>) -> Result<Option<Tensor<R>>> {
        let mut g = grad.clone();
        let n = self.blocks.len();
        for (i, b) in self.blocks.iter_mut().enumerate().rev() {
            let need = i > 0 || self.propagate_input_grad;
            match b.backward(&g, need)? {
                Some(next) => g = next,
                None => {
                    debug_assert_eq!(i, 0);
                    return Ok(None);
                }
            }
        }
        Ok((n > 0 || self.propagate_input_grad).then_some(g))
    }

    pub(crate) fn hash_regime(&self, h: &mut impl Hasher) {
        for b in &self.blocks {
            b.relu.hash_regime(h);
        }
    }
}

impl<R: Real> Module<R> for DenseStack<R> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<R>)) {
        for b in &self.blocks {
            b.linear.visit_params(f);
            b.norm.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<R>)) {
        for b in &mut self.blocks {
            b.linear.visit_params_mut(f);
            b.norm.visit_params_mut(f);
        }
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&Tensor<R>)) {
        for b in &self.blocks {
            b.norm.visit_buffers(f);
        }
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<R>)) {
        for b in &mut self.blocks {
            b.norm.visit_buffers_mut(f);
        }
    }
}

/// Convolution (stride 1, valid) → batch norm → ReLU → max pooling.
#[derive(Clone, Debug)]
pub struct ConvStage<R> {
    pub conv: Conv2d<R>,
    pub norm: BatchNorm<R>,
    relu: Relu<R>,
    pub pool: MaxPool2d,
}

impl<R: Real> ConvStage<R> {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        pool_kernel: usize,
        pool_stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            conv: Conv2d::new(&format!("{name}.conv"), c_in, c_out, (kernel, kernel), (1, 1), rng),
            norm: BatchNorm::new(&format!("{name}.bn"), c_out),
            relu: Relu::new(),
            pool: MaxPool2d::new((pool_kernel, pool_kernel), (pool_stride, pool_stride)),
        }
    }

    pub fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Result<Tensor<R>> {
        let y = self.conv.forward(x)?;
        let y = self.norm.forward(&y, mode)?;
        let y = self.relu.forward(&y);
        self.pool.forward(&y)
    }

    pub fn backward(&mut self, grad: &Tensor<R>) -> Result<Option<Tensor<R>>> {
        let g = self.pool.backward(grad)?;
        let g = self.relu.backward(&g)?;
        let g = self.norm.backward(&g)?;
        self.conv.backward(&g)
    }

    pub(crate) fn hash_regime(&self, h: &mut impl Hasher) {
        self.relu.hash_regime(h);
        self.pool.hash_regime(h);
    }
}

/// Per-frame lip-image feature extractor: conv stages, flatten, dense stack.
#[derive(Clone, Debug)]
pub struct ImageCnn<R> {
    pub stages: Vec<ConvStage<R>>,
    pub dense: DenseStack<R>,
    flat_dim: usize,
    pooled_shape: Vec<usize>,
}

impl<R: Real> ImageCnn<R> {
    pub fn new(stages: Vec<ConvStage<R>>, dense: DenseStack<R>, flat_dim: usize) -> Self {
        Self {
            stages,
            dense,
            flat_dim,
            pooled_shape: Vec::new(),
        }
    }

    pub fn flat_dim(&self) -> usize {
        self.flat_dim
    }

    pub fn forward(&mut self, images: &Tensor<R>, mode: Mode) -> Result<Tensor<R>> {
        let mut h = images.clone();
        for s in &mut self.stages {
            h = s.forward(&h, mode)?;
        }
        let n = h.rows();
        self.pooled_shape = h.shape().to_vec();
        let flat = h.reshape(&[n, self.flat_dim])?;
        self.dense.forward(&flat, mode)
    }

    /// Backpropagates into all CNN parameters; the image input needs no gradient.
    pub fn backward(&mut self, grad: &Tensor<R>) -> Result<()> {
        let g = self.dense.backward(grad)?.expect("dense stack propagates into the CNN");
        let mut g = g.reshape(&self.pooled_shape)?;
        for s in self.stages.iter_mut().rev() {
            match s.backward(&g)? {
                Some(next) => g = next,
                None => break,
            }
        }
        Ok(())
    }

    pub(crate) fn hash_regime(&self, h: &mut impl Hasher) {
        for s in &self.stages {
            s.hash_regime(h);
        }
        self.dense.hash_regime(h);
    }
}

impl<R: Real> Module<R> for ImageCnn<R> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<R>)) {
        for s in &self.stages {
            s.conv.visit_params(f);
            s.norm.visit_params(f);
        }
        self.dense.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<R>)) {
        for s in &mut self.stages {
            s.conv.visit_params_mut(f);
            s.norm.visit_params_mut(f);
        }
        self.dense.visit_params_mut(f);
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&Tensor<R>)) {
        for s in &self.stages {
            s.norm.visit_buffers(f);
        }
        self.dense.visit_buffers(f);
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<R>)) {
        for s in &mut self.stages {
            s.norm.visit_buffers_mut(f);
        }
        self.dense.visit_buffers_mut(f);
    }
}
