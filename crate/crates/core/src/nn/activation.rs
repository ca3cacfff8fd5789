use super::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

#[inline]
pub fn sigmoid<R: Real>(x: R) -> R {
    R::one() / (R::one() + (-x).exp())
}

impl Activation {
    #[inline]
    pub fn apply<R: Real>(self, x: R) -> R {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(R::zero()),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_from_output<R: Real>(self, y: R) -> R {
        match self {
            Activation::Sigmoid => y * (R::one() - y),
            Activation::Tanh => R::one() - y * y,
            Activation::Relu => {
                if y > R::zero() {
                    R::one()
                } else {
                    R::zero()
                }
            }
        }
    }

    pub fn forward<R: Real>(self, x: &Tensor<R>) -> Tensor<R> {
        x.map(|v| self.apply(v))
    }

    /// Adjoint given the forward output.
    pub fn backward<R: Real>(self, output: &Tensor<R>, grad_out: &Tensor<R>) -> Tensor<R> {
        let mut g = grad_out.clone();
        for (gi, &y) in g.data_mut().iter_mut().zip(output.data()) {
            *gi *= self.derivative_from_output(y);
        }
        g
    }
}


/// Stateful ReLU that remembers its output for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Relu<R> {
    output: Option<Tensor<R>>,
}

impl<R: Real> Relu<R> {
    pub fn new() -> Self {
        Self { output: None }
    }

    pub fn forward(&mut self, x: &Tensor<R>) -> Tensor<R> {
        let y = Activation::Relu.forward(x);
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&self, grad_out: &Tensor<R>) -> crate::Result<Tensor<R>> {
        let y = self
            .output
            .as_ref()
            .ok_or_else(|| crate::Error::invalid("Relu::backward before forward"))?;
        Ok(Activation::Relu.backward(y, grad_out))
    }

    /// Feeds the active/inactive mask into `h`.
    pub(crate) fn hash_regime(&self, h: &mut impl std::hash::Hasher) {
        if let Some(y) = &self.output {
            for chunk in y.data().chunks(64) {
                let mut bits = 0u64;
                for (i, v) in chunk.iter().enumerate() {
                    if *v > R::zero() {
                        bits |= 1 << i;
                    }
                }
                h.write_u64(bits);
            }
        }
    }
}
