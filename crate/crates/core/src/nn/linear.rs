//! Fully-connected layer: `y = x·Wᵀ + b`.

use rand::Rng;

use super::tensor::ensure_rank;
use super::{glorot_limit, Module, Param, Real, Tensor};
use crate::{Error, Result};

/// `x [B×D_in]`, `w [D_out×D_in]`, `b [D_out]` → `[B×D_out]`.
pub fn fc_forward<R: Real>(x: &Tensor<R>, w: &Tensor<R>, b: &Tensor<R>) -> Result<Tensor<R>> {
    ensure_rank("fc_forward", x, 2)?;
    ensure_rank("fc_forward", w, 2)?;
    let (batch, d_in) = (x.shape()[0], x.shape()[1]);
    let d_out = w.shape()[0];
    if w.shape()[1] != d_in {
        return Err(Error::shape("fc_forward", x.shape(), w.shape()));
    }
    if b.shape() != [d_out] {
        return Err(Error::shape("fc_forward", w.shape(), b.shape()));
    }
    let mut y = Tensor::zeros(&[batch, d_out]);
    for row in y.data_mut().chunks_exact_mut(d_out) {
        row.copy_from_slice(b.data());
    }
    R::gemm(false, true, batch, d_out, d_in, R::one(), x.data(), w.data(), R::one(), y.data_mut());
    Ok(y)
}

/// Adjoint of [`fc_forward`]. Accumulates into `w_grad`/`b_grad`, returns the input gradient.
pub fn fc_backward<R: Real>(
    grad_out: &Tensor<R>,
    x: &Tensor<R>,
    w: &Tensor<R>,
    w_grad: &mut Tensor<R>,
    b_grad: &mut Tensor<R>,
    need_input_grad: bool,
) -> Result<Option<Tensor<R>>> {
    let (batch, d_in) = (x.shape()[0], x.shape()[1]);
    let d_out = w.shape()[0];
    if grad_out.shape() != [batch, d_out] {
        return Err(Error::shape("fc_backward", grad_out.shape(), &[batch, d_out]));
    }
    R::gemm(true, false, d_out, d_in, batch, R::one(), grad_out.data(), x.data(), R::one(), w_grad.data_mut());
    let bg = b_grad.data_mut();
    for row in grad_out.data().chunks_exact(d_out) {
        for (acc, &g) in bg.iter_mut().zip(row) {
            *acc += g;
        }
    }
    if !need_input_grad {
        return Ok(None);
    }
    let mut gx = Tensor::zeros(&[batch, d_in]);
    R::gemm(false, false, batch, d_in, d_out, R::one(), grad_out.data(), w.data(), R::zero(), gx.data_mut());
    Ok(Some(gx))
}

#[derive(Clone, Debug)]
pub struct Linear<R> {
    pub weight: Param<R>,
    pub bias: Param<R>,
    input: Option<Tensor<R>>,
}

impl<R: Real> Linear<R> {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let limit = glorot_limit(d_in, d_out);
        Self {
            weight: Param::new(format!("{name}.weight"), Tensor::uniform(&[d_out, d_in], limit, rng)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[d_out])),
            input: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&mut self, x: &Tensor<R>) -> Result<Tensor<R>> {
        let y = fc_forward(x, &self.weight.value, &self.bias.value)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<R>) -> Result<Tensor<R>> {
        Ok(self.backward_impl(grad_out, true)?.expect("input gradient requested"))
    }

    /// Accumulates parameter gradients without forming the input gradient.
    pub fn backward_params_only(&mut self, grad_out: &Tensor<R>) -> Result<()> {
        self.backward_impl(grad_out, false).map(|_| ())
    }

    fn backward_impl(&mut self, grad_out: &Tensor<R>, need_input: bool) -> Result<Option<Tensor<R>>> {
        let x = self.input.as_ref().ok_or_else(|| Error::invalid("Linear::backward before forward"))?;
        fc_backward(grad_out, x, &self.weight.value, &mut self.weight.grad, &mut self.bias.grad, need_input)
    }
}

impl<R: Real> Module<R> for Linear<R> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<R>)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<R>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
