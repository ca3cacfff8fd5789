//! Batch normalization over the channel axis (axis 1) of `[N×C]` or `[N×C×H×W]`.

use super::{Mode, Module, Param, Real, Tensor};
use crate::{Error, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Clone, Debug)]
struct Cache<R> {
    xhat: Vec<R>,
    inv_std: Vec<R>,
    mode: Mode,
}

#[derive(Clone, Debug)]
pub struct BatchNorm<R> {
    pub gamma: Param<R>,
    pub beta: Param<R>,
    pub running_mean: Tensor<R>,
    pub running_var: Tensor<R>,
    pub momentum: f64,
    pub epsilon: f64,
    cache: Option<Cache<R>>,
}

fn layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::invalid(format!("batchnorm expects rank >= 2, got {shape:?}")));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

impl<R: Real> BatchNorm<R> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Tensor::filled(&[channels], R::one())),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], R::one()),
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Result<Tensor<R>> {
        let (n, c, inner) = layout(x.shape())?;
        if c != self.channels() {
            return Err(Error::shape("batchnorm_forward", x.shape(), self.gamma.value.shape()));
        }
        let count = n * inner;
        let eps = R::of(self.epsilon);
        let xd = x.data();
        let mut mean = vec![R::zero(); c];
        let mut inv_std = vec![R::zero(); c];
        match mode {
            Mode::Train => {
                if count < 2 {
                    return Err(Error::invalid(
                        "batchnorm in train mode needs at least two values per channel",
                    ));
                }
                let mut var = vec![R::zero(); c];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * inner;
                        mean[ch] += xd[off..off + inner].iter().copied().sum::<R>();
                    }
                }
                let inv_count = R::one() / R::of(count as f64);
                mean.iter_mut().for_each(|m| *m *= inv_count);
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * inner;
                        let m = mean[ch];
                        var[ch] += xd[off..off + inner].iter().map(|&v| (v - m) * (v - m)).sum::<R>();
                    }
                }
                var.iter_mut().for_each(|v| *v *= inv_count);
                let mom = R::of(self.momentum);
                let unbias = R::of(count as f64 / (count - 1) as f64);
                for ch in 0..c {
                    inv_std[ch] = R::one() / (var[ch] + eps).sqrt();
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = (R::one() - mom) * *rm + mom * mean[ch];
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = (R::one() - mom) * *rv + mom * var[ch] * unbias;
                }
            }
            Mode::Infer => {
                for ch in 0..c {
                    mean[ch] = self.running_mean.data()[ch];
                    inv_std[ch] = R::one() / (self.running_var.data()[ch] + eps).sqrt();
                }
            }
        }
        let mut xhat = vec![R::zero(); xd.len()];
        let mut y = Tensor::zeros(x.shape());
        let (g, bt) = (self.gamma.value.data(), self.beta.value.data());
        let yd = y.data_mut();
        for b in 0..n {
            for ch in 0..c {
                let r = (b * c + ch) * inner..(b * c + ch + 1) * inner;
                let (m, s, gc, bc) = (mean[ch], inv_std[ch], g[ch], bt[ch]);
                for ((h, y), &x) in xhat[r.clone()].iter_mut().zip(&mut yd[r.clone()]).zip(&xd[r]) {
                    *h = (x - m) * s;
                    *y = gc * *h + bc;
                }
            }
        }
        self.cache = Some(Cache { xhat, inv_std, mode });
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<R>) -> Result<Tensor<R>> {
        let cache = self.cache.as_ref().ok_or_else(|| Error::invalid("batchnorm_backward before forward"))?;
        let (n, c, inner) = layout(grad_out.shape())?;
        if grad_out.len() != cache.xhat.len() || c != self.channels() {
            return Err(Error::shape("batchnorm_backward", grad_out.shape(), &[cache.xhat.len()]));
        }
        let gd = grad_out.data();
        let mut sum_g = vec![R::zero(); c];
        let mut sum_gx = vec![R::zero(); c];
        for b in 0..n {
            for ch in 0..c {
                let r = (b * c + ch) * inner..(b * c + ch + 1) * inner;
                let (mut sg, mut sgx) = (R::zero(), R::zero());
                for (&g, &h) in gd[r.clone()].iter().zip(&cache.xhat[r]) {
                    sg += g;
                    sgx += g * h;
                }
                sum_g[ch] += sg;
                sum_gx[ch] += sgx;
            }
        }
        for ch in 0..c {
            self.gamma.grad.data_mut()[ch] += sum_gx[ch];
            self.beta.grad.data_mut()[ch] += sum_g[ch];
        }
        let gamma = self.gamma.value.data();
        let mut gx = Tensor::zeros(grad_out.shape());
        let gxd = gx.data_mut();
        match cache.mode {
            Mode::Infer => {
                for b in 0..n {
                    for ch in 0..c {
                        let scale = gamma[ch] * cache.inv_std[ch];
                        let r = (b * c + ch) * inner..(b * c + ch + 1) * inner;
                        for (o, &g) in gxd[r.clone()].iter_mut().zip(&gd[r]) {
                            *o = g * scale;
                        }
                    }
                }
            }
            Mode::Train => {
                let inv_count = R::one() / R::of((n * inner) as f64);
                for b in 0..n {
                    for ch in 0..c {
                        let scale = gamma[ch] * cache.inv_std[ch];
                        let mg = sum_g[ch] * inv_count;
                        let mgx = sum_gx[ch] * inv_count;
                        let r = (b * c + ch) * inner..(b * c + ch + 1) * inner;
                        for ((o, &g), &h) in gxd[r.clone()].iter_mut().zip(&gd[r.clone()]).zip(&cache.xhat[r]) {
                            *o = scale * (g - mg - h * mgx);
                        }
                    }
                }
            }
        }
        Ok(gx)
    }
}

impl<R: Real> Module<R> for BatchNorm<R> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<R>)) {
        f(&self.gamma);
        f(&self.beta);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<R>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&Tensor<R>)) {
        f(&self.running_mean);
        f(&self.running_var);
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<R>)) {
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_module, GradCheckOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn column_stats(y: &Tensor<f64>) -> (Vec<f64>, Vec<f64>) {
        let (n, d) = (y.shape()[0], y.shape()[1]);
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for r in 0..n {
            for j in 0..d {
                mean[j] += y.row(r)[j] / n as f64;
            }
        }
        for r in 0..n {
            for j in 0..d {
                var[j] += (y.row(r)[j] - mean[j]).powi(2) / n as f64;
            }
        }
        (mean, var)
    }

    #[test]
    fn standardized_batch_passes_through() {
        // Each column has mean 0 and variance 1 already.
        let x = Tensor::<f64>::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0], &[1.0, 1.0], &[-1.0, -1.0]]);
        let mut bn = BatchNorm::new("bn", 2);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn train_mode_normalizes_any_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..40).map(|_| rng.random_range(-3.0..7.0)).collect();
        let x = Tensor::from_vec(&[10, 4], data).unwrap();
        let mut bn = BatchNorm::new("bn", 4);
        let y = bn.forward(&x, Mode::Train).unwrap();
        let (mean, var) = column_stats(&y);
        for j in 0..4 {
            assert!(mean[j].abs() < 1e-12);
            assert!((var[j] - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn single_row_train_batch_is_rejected() {
        let mut bn = BatchNorm::<f32>::new("bn", 3);
        assert!(bn.forward(&Tensor::zeros(&[1, 3]), Mode::Train).is_err());
        assert!(bn.forward(&Tensor::zeros(&[1, 3]), Mode::Infer).is_ok());
    }

    #[test]
    fn running_statistics_track_batch_moments() {
        let x = Tensor::<f64>::from_rows(&[&[2.0], &[4.0]]);
        let mut bn = BatchNorm::new("bn", 1);
        bn.forward(&x, Mode::Train).unwrap();
        // mean 3, unbiased var 2.
        assert!((bn.running_mean.data()[0] - 0.3).abs() < 1e-12);
        assert!((bn.running_var.data()[0] - (0.9 + 0.2)).abs() < 1e-12);
        assert!(bn.running_var.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn infer_mode_is_independent_of_batch_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut bn = BatchNorm::<f64>::new("bn", 3);
        bn.running_mean = Tensor::uniform(&[3], 1.0, &mut rng);
        bn.running_var = Tensor::filled(&[3], 2.0);
        let row = [0.3, -0.2, 0.9];
        let a = Tensor::from_rows(&[&row, &[5.0, 5.0, 5.0]]);
        let b = Tensor::from_rows(&[&[-9.0, 1.0, 0.0], &[1.0, 1.0, 1.0], &row]);
        let ya = bn.forward(&a, Mode::Infer).unwrap();
        let yb = bn.forward(&b, Mode::Infer).unwrap();
        assert_eq!(ya.row(0), yb.row(2));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [Mode::Train, Mode::Infer] {
            let mut bn = BatchNorm::<f64>::new("bn", 3);
            bn.gamma.value = Tensor::uniform(&[3], 2.0, &mut rng);
            bn.beta.value = Tensor::uniform(&[3], 1.0, &mut rng);
            bn.running_var = Tensor::filled(&[3], 1.7);
            let x = Tensor::uniform(&[2, 3, 2, 2], 2.0, &mut rng);
            let report = check_module(
                &mut bn,
                &x,
                |m, x| m.forward(x, mode),
                |m, g| m.backward(g),
                GradCheckOptions::default(),
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-5, "{mode:?} {report:?}");
            assert!(report.input_max_rel_error.unwrap() < 1e-5, "{mode:?} {report:?}");
        }
    }
}
