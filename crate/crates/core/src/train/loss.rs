use crate::nn::{Real, Tensor};
use crate::{Error, Result};

/// Mean squared error over all elements and its gradient `2(pred − target)/N`.
pub fn mse_loss<R: Real>(pred: &Tensor<R>, target: &Tensor<R>) -> Result<(f64, Tensor<R>)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse_loss", pred.shape(), target.shape()));
    }
    let n = pred.len().max(1) as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let scale = R::of(2.0 / n);
    let mut sum = 0.0;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        sum += d.as_f64() * d.as_f64();
        *g = d * scale;
    }
    Ok((sum / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_inputs_give_zero() {
        let a = Tensor::<f64>::from_rows(&[&[1.0, -2.0]]);
        let (l, g) = mse_loss(&a, &a).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_arithmetic() {
        let p = Tensor::<f64>::from_vec(&[1], vec![2.0]).unwrap();
        let t = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        let (l, g) = mse_loss(&p, &t).unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g.data(), &[4.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = Tensor::<f64>::from_rows(&[&[0.3, -1.1, 2.0], &[0.0, 0.5, -0.25]]);
        let t = Tensor::from_rows(&[&[1.0, 0.2, -0.7], &[0.1, 0.1, 0.1]]);
        let (_, g) = mse_loss(&p, &t).unwrap();
        let eps = 1e-5;
        for k in 0..p.len() {
            let mut hi = p.clone();
            hi.data_mut()[k] += eps;
            let mut lo = p.clone();
            lo.data_mut()[k] -= eps;
            let num = (mse_loss(&hi, &t).unwrap().0 - mse_loss(&lo, &t).unwrap().0) / (2.0 * eps);
            assert!((num - g.data()[k]).abs() / num.abs().max(1e-12) < 1e-8);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Tensor::<f32>::zeros(&[2, 2]);
        let b = Tensor::zeros(&[4]);
        assert!(mse_loss(&a, &b).is_err());
    }
}
