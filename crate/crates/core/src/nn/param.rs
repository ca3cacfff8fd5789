use super::{Real, Tensor};

/// A trainable tensor with its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param<R> {
    pub name: String,
    pub value: Tensor<R>,
    pub grad: Tensor<R>,
}

impl<R: Real> Param<R> {
    pub fn new(name: impl Into<String>, value: Tensor<R>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(R::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns parameters and (optionally) non-trainable buffers.
pub trait Module<R: Real> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<R>));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<R>));

    /// Non-trainable state such as batch-norm running statistics.
    fn visit_buffers(&self, _f: &mut dyn FnMut(&Tensor<R>)) {}
    fn visit_buffers_mut(&mut self, _f: &mut dyn FnMut(&mut Tensor<R>)) {}

    fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |p| p.zero_grad());
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }
}
