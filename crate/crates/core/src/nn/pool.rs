use std::hash::{Hash, Hasher};

use super::conv::window_output_len;
use super::tensor::ensure_rank;
use super::{Real, Tensor};
use crate::{Error, Result};

/// Flat input index of the maximum for every output element.
#[derive(Clone, Debug)]
pub struct PoolCache {
    pub input_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// Max pooling over `[B×C×H×W]` with floor-mode output shape. Ties go to
/// the first (lowest-index) element of the window.
pub fn maxpool2d<R: Real>(
    x: &Tensor<R>,
    kernel: (usize, usize),
    stride: (usize, usize),
) -> Result<(Tensor<R>, PoolCache)> {
    ensure_rank("maxpool2d", x, 4)?;
    let s = x.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let oh = window_output_len(h, kernel.0, stride.0)?;
    let ow = window_output_len(w, kernel.1, stride.1)?;
    let mut y = Tensor::zeros(&[b, c, oh, ow]);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    let xd = x.data();
    let yd = y.data_mut();
    let mut o = 0;
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride.0 * w + ox * stride.1;
                let mut best_v = xd[best];
                for ki in 0..kernel.0 {
                    let row = base + (oy * stride.0 + ki) * w + ox * stride.1;
                    for (j, &v) in xd[row..row + kernel.1].iter().enumerate() {
                        let gt = v > best_v;
                        best_v = if gt { v } else { best_v };
                        best = if gt { row + j } else { best };
                    }
                }
                yd[o] = best_v;
                argmax.push(best);
                o += 1;
            }
        }
    }
    Ok((
        y,
        PoolCache {
            input_shape: s.to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool2d_backward<R: Real>(grad_out: &Tensor<R>, cache: &PoolCache) -> Result<Tensor<R>> {
    if grad_out.len() != cache.argmax.len() {
        return Err(Error::shape("maxpool2d_backward", grad_out.shape(), &[cache.argmax.len()]));
    }
    let mut gx = Tensor::zeros(&cache.input_shape);
    let gd = gx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        gd[idx] += g;
    }
    Ok(gx)
}

#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    cache: Option<PoolCache>,
}

impl MaxPool2d {
    pub fn new(kernel: (usize, usize), stride: (usize, usize)) -> Self {
        Self {
            kernel,
            stride,
            cache: None,
        }
    }

    pub fn forward<R: Real>(&mut self, x: &Tensor<R>) -> Result<Tensor<R>> {
        let (y, cache) = maxpool2d(x, self.kernel, self.stride)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward<R: Real>(&self, grad_out: &Tensor<R>) -> Result<Tensor<R>> {
        let cache = self.cache.as_ref().ok_or_else(|| Error::invalid("MaxPool2d::backward before forward"))?;
        maxpool2d_backward(grad_out, cache)
    }

    pub(crate) fn hash_regime(&self, h: &mut impl Hasher) {
        if let Some(c) = &self.cache {
            c.argmax.hash(h);
        }
    }
}
