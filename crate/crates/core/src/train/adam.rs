use crate::nn::{Module, Real, Tensor};
use crate::{Error, Result};

use super::TrainConfig;

/// First and second moments per parameter tensor, in visit order.
#[derive(Clone, Debug)]
pub struct AdamState<R> {
    pub m: Vec<Tensor<R>>,
    pub v: Vec<Tensor<R>>,
    pub t: u64,
}

impl<R: Real> AdamState<R> {
    pub fn new(model: &impl Module<R>) -> Self {
        let mut m = Vec::new();
        model.visit_params(&mut |p| m.push(Tensor::zeros(p.value.shape())));
        Self { v: m.clone(), m, t: 0 }
    }
}

/// Scales all gradients so that their global L2 norm is at most `max_norm`.
/// Returns the norm before scaling.
pub fn clip_grad_norm<R: Real>(model: &mut impl Module<R>, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    model.visit_params(&mut |p| sq += p.grad.sum_sq());
    let norm = sq.sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = R::of(max_norm / norm);
        model.visit_params_mut(&mut |p| p.grad.data_mut().iter_mut().for_each(|g| *g *= scale));
    }
    norm
}

/// One bias-corrected Adam update; gradients are zeroed afterwards.
/// A non-finite gradient aborts before any parameter changes.
pub fn adam_step<R: Real>(model: &mut impl Module<R>, state: &mut AdamState<R>, cfg: &TrainConfig) -> Result<()> {
    let mut finite = true;
    model.visit_params(&mut |p| finite &= p.grad.is_finite());
    if !finite {
        return Err(Error::NonFinite("adam_step gradient"));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = cfg.learning_rate;
    let eps = cfg.adam_eps;
    let mut k = 0;
    let mut mismatch = false;
    model.visit_params_mut(&mut |p| {
        let (Some(m), Some(v)) = (state.m.get_mut(k), state.v.get_mut(k)) else {
            mismatch = true;
            return;
        };
        k += 1;
        if m.len() != p.len() {
            mismatch = true;
            return;
        }
        let md = m.data_mut();
        let vd = v.data_mut();
        let grad = p.grad.data_mut();
        for (i, w) in p.value.data_mut().iter_mut().enumerate() {
            let g = grad[i].as_f64();
            let mi = b1 * md[i].as_f64() + (1.0 - b1) * g;
            let vi = b2 * vd[i].as_f64() + (1.0 - b2) * g * g;
            md[i] = R::of(mi);
            vd[i] = R::of(vi);
            let step = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            *w -= R::of(step);
            grad[i] = R::zero();
        }
    });
    if mismatch || k != state.m.len() {
        return Err(Error::invalid("Adam state does not match the model's parameters"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Linear, Param};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Single(Param<f64>);

    impl Module<f64> for Single {
        fn visit_params(&self, f: &mut dyn FnMut(&Param<f64>)) {
            f(&self.0)
        }
        fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<f64>)) {
            f(&mut self.0)
        }
    }

    fn single(values: &[f64]) -> Single {
        Single(Param::new("w", Tensor::from_vec(&[values.len()], values.to_vec()).unwrap()))
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        let mut p = single(&[1.0, 1.0, 1.0]);
        p.0.grad = Tensor::from_vec(&[3], vec![0.3, -2.0, 1e-3]).unwrap();
        let cfg = TrainConfig::default();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &mut st, &cfg).unwrap();
        for (w, g) in p.0.value.data().iter().zip([0.3f64, -2.0, 1e-3]) {
            let expected = 1.0 - cfg.learning_rate * g / (g.abs() + cfg.adam_eps);
            assert!((w - expected).abs() < 1e-12, "{w} vs {expected}");
        }
        assert!(p.0.grad.data().iter().all(|&g| g == 0.0));
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_changes_nothing_and_decays_moments() {
        let mut p = single(&[0.5]);
        let cfg = TrainConfig::default();
        let mut st = AdamState::new(&p);
        st.m[0].data_mut()[0] = 0.0;
        adam_step(&mut p, &mut st, &cfg).unwrap();
        assert_eq!(p.0.value.data(), &[0.5]);

        p.0.grad.data_mut()[0] = 1.0;
        adam_step(&mut p, &mut st, &cfg).unwrap();
        let (m1, v1) = (st.m[0].data()[0], st.v[0].data()[0]);
        let before = p.0.value.data()[0];
        adam_step(&mut p, &mut st, &cfg).unwrap();
        assert!((st.m[0].data()[0] - 0.9 * m1).abs() < 1e-15);
        assert!((st.v[0].data()[0] - 0.999 * v1).abs() < 1e-15);
        // A decayed but nonzero first moment keeps moving the parameter.
        assert!(p.0.value.data()[0] < before);
    }

    #[test]
    fn only_parameters_with_gradient_move() {
        let mut p = single(&[1.0, 2.0, 3.0, 4.0]);
        p.0.grad = Tensor::from_vec(&[4], vec![0.0, 1.0, 0.0, -1.0]).unwrap();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &mut st, &TrainConfig::default()).unwrap();
        let w = p.0.value.data();
        assert_eq!(w[0], 1.0);
        assert_ne!(w[1], 2.0);
        assert_eq!(w[2], 3.0);
        assert_ne!(w[3], 4.0);
    }

    #[test]
    fn identical_gradient_sequences_give_identical_trajectories() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut layer = Linear::<f32>::new("fc", 3, 2, &mut rng);
            let mut st = AdamState::new(&layer);
            for k in 0..10 {
                layer.weight.grad.fill(0.1 * k as f32 - 0.3);
                layer.bias.grad.fill(0.05);
                adam_step(&mut layer, &mut st, &TrainConfig::default()).unwrap();
            }
            layer.weight.value.into_data()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_update() {
        let mut p = single(&[1.0, 1.0]);
        p.0.grad = Tensor::from_vec(&[2], vec![1.0, f64::NAN]).unwrap();
        let mut st = AdamState::new(&p);
        assert!(matches!(adam_step(&mut p, &mut st, &TrainConfig::default()), Err(Error::NonFinite(_))));
        assert_eq!(p.0.value.data(), &[1.0, 1.0]);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn clipping_bounds_the_global_norm() {
        let mut p = single(&[0.0, 0.0]);
        p.0.grad = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(clip_grad_norm(&mut p, 1.0), 5.0);
        let g = p.0.grad.data();
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
        p.0.grad = Tensor::from_vec(&[2], vec![0.3, 0.4]).unwrap();
        clip_grad_norm(&mut p, 1.0);
        assert_eq!(p.0.grad.data(), &[0.3, 0.4]);
    }
}
