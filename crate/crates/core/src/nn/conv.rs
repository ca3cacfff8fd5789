//! Valid-padding 2-D cross-correlation via im2col + GEMM.

use rand::Rng;

use super::tensor::ensure_rank;
use super::{Module, Param, Real, Tensor};
use crate::{Error, Result};

/// Output length of a valid (unpadded) window sweep: `floor((n − k) / s) + 1`.
pub fn window_output_len(n: usize, k: usize, s: usize) -> Result<usize> {
    if k == 0 || s == 0 {
        return Err(Error::invalid(format!("window size {k} and stride {s} must be positive")));
    }
    if k > n {
        return Err(Error::invalid(format!("window {k} larger than input extent {n}")));
    }
    Ok((n - k) / s + 1)
}

struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new(x: &[usize], k: &[usize], stride: (usize, usize)) -> Result<Self> {
        let (c_in, h, w) = (x[1], x[2], x[3]);
        let (kh, kw) = (k[2], k[3]);
        if k[1] != c_in {
            return Err(Error::shape("conv2d", x, k));
        }
        let oh = window_output_len(h, kh, stride.0)?;
        let ow = window_output_len(w, kw, stride.1)?;
        Ok(Self {
            c_in,
            h,
            w,
            kh,
            kw,
            sh: stride.0,
            sw: stride.1,
            oh,
            ow,
        })
    }

    fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn out_area(&self) -> usize {
        self.oh * self.ow
    }

    fn im2col<R: Real>(&self, img: &[R], col: &mut [R]) {
        let area = self.out_area();
        for c in 0..self.c_in {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = ((c * self.kh + ki) * self.kw + kj) * area;
                    for oy in 0..self.oh {
                        let src = (c * self.h + oy * self.sh + ki) * self.w + kj;
                        let dst = row + oy * self.ow;
                        for ox in 0..self.ow {
                            col[dst + ox] = img[src + ox * self.sw];
                        }
                    }
                }
            }
        }
    }

    fn col2im<R: Real>(&self, col: &[R], img: &mut [R]) {
        let area = self.out_area();
        for c in 0..self.c_in {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = ((c * self.kh + ki) * self.kw + kj) * area;
                    for oy in 0..self.oh {
                        let dst = (c * self.h + oy * self.sh + ki) * self.w + kj;
                        let src = row + oy * self.ow;
                        for ox in 0..self.ow {
                            img[dst + ox * self.sw] += col[src + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `x [B×C_in×H×W]`, `kernels [C_out×C_in×kH×kW]`, `bias [C_out]` → `[B×C_out×H'×W']`.
pub fn conv2d_forward<R: Real>(
    x: &Tensor<R>,
    kernels: &Tensor<R>,
    bias: &Tensor<R>,
    stride: (usize, usize),
) -> Result<Tensor<R>> {
    ensure_rank("conv2d_forward", x, 4)?;
    ensure_rank("conv2d_forward", kernels, 4)?;
    let g = Geometry::new(x.shape(), kernels.shape(), stride)?;
    let (batch, c_out) = (x.shape()[0], kernels.shape()[0]);
    if bias.shape() != [c_out] {
        return Err(Error::shape("conv2d_forward", kernels.shape(), bias.shape()));
    }
    let (patch, area) = (g.patch(), g.out_area());
    let in_len = g.c_in * g.h * g.w;
    let mut y = Tensor::zeros(&[batch, c_out, g.oh, g.ow]);
    let mut col = vec![R::zero(); patch * area];
    for (img, out) in x.data().chunks_exact(in_len).zip(y.data_mut().chunks_exact_mut(c_out * area)) {
        g.im2col(img, &mut col);
        for (ch, &b) in out.chunks_exact_mut(area).zip(bias.data()) {
            ch.fill(b);
        }
        R::gemm(false, false, c_out, area, patch, R::one(), kernels.data(), &col, R::one(), out);
    }
    Ok(y)
}

/// Adjoint of [`conv2d_forward`]; accumulates kernel and bias gradients.
pub fn conv2d_backward<R: Real>(
    grad_out: &Tensor<R>,
    x: &Tensor<R>,
    kernels: &Tensor<R>,
    stride: (usize, usize),
    kernel_grad: &mut Tensor<R>,
    bias_grad: &mut Tensor<R>,
    need_input_grad: bool,
) -> Result<Option<Tensor<R>>> {
    let g = Geometry::new(x.shape(), kernels.shape(), stride)?;
    let (batch, c_out) = (x.shape()[0], kernels.shape()[0]);
    let expected = [batch, c_out, g.oh, g.ow];
    if grad_out.shape() != expected {
        return Err(Error::shape("conv2d_backward", grad_out.shape(), &expected));
    }
    let (patch, area) = (g.patch(), g.out_area());
    let in_len = g.c_in * g.h * g.w;
    let mut col = vec![R::zero(); patch * area];
    let mut dcol = vec![R::zero(); patch * area];
    let mut gx = need_input_grad.then(|| Tensor::zeros(x.shape()));
    for (n, (img, go)) in x
        .data()
        .chunks_exact(in_len)
        .zip(grad_out.data().chunks_exact(c_out * area))
        .enumerate()
    {
        g.im2col(img, &mut col);
        R::gemm(false, true, c_out, patch, area, R::one(), go, &col, R::one(), kernel_grad.data_mut());
        for (acc, ch) in bias_grad.data_mut().iter_mut().zip(go.chunks_exact(area)) {
            *acc += ch.iter().copied().sum::<R>();
        }
        if let Some(gx) = gx.as_mut() {
            R::gemm(true, false, patch, area, c_out, R::one(), kernels.data(), go, R::zero(), &mut dcol);
            g.col2im(&dcol, &mut gx.data_mut()[n * in_len..(n + 1) * in_len]);
        }
    }
    Ok(gx)
}

#[derive(Clone, Debug)]
pub struct Conv2d<R> {
    pub kernels: Param<R>,
    pub bias: Param<R>,
    pub stride: (usize, usize),
    /// The first layer of a network never needs an input gradient.
    pub propagate_input_grad: bool,
    input: Option<Tensor<R>>,
}

impl<R: Real> Conv2d<R> {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let area = kernel.0 * kernel.1;
        let limit = super::glorot_limit(c_in * area, c_out * area);
        Self {
            kernels: Param::new(
                format!("{name}.kernels"),
                Tensor::uniform(&[c_out, c_in, kernel.0, kernel.1], limit, rng),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[c_out])),
            stride,
            propagate_input_grad: true,
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<R>) -> Result<Tensor<R>> {
        let y = conv2d_forward(x, &self.kernels.value, &self.bias.value, self.stride)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Returns `None` for the input gradient when `propagate_input_grad` is off.
    pub fn backward(&mut self, grad_out: &Tensor<R>) -> Result<Option<Tensor<R>>> {
        let x = self.input.as_ref().ok_or_else(|| Error::invalid("Conv2d::backward before forward"))?;
        conv2d_backward(
            grad_out,
            x,
            &self.kernels.value,
            self.stride,
            &mut self.kernels.grad,
            &mut self.bias.grad,
            self.propagate_input_grad,
        )
    }
}

impl<R: Real> Module<R> for Conv2d<R> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<R>)) {
        f(&self.kernels);
        f(&self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<R>)) {
        f(&mut self.kernels);
        f(&mut self.bias);
    }
}
