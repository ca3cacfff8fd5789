//! Central-difference verification of analytic gradients (64-bit only).

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Module, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Lower bound on the relative-error denominator so that gradients that
    /// are zero analytically do not turn round-off into O(1) errors.
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            abs_floor: 1e-6,
        }
    }
}

/// Scalar loss plus a fingerprint of the piecewise-linear regime (ReLU masks,
/// pooling argmaxes) the network was in while computing it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub regime: u64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub checked: usize,
    /// Elements whose ±eps probe crossed a ReLU or pooling boundary; the
    /// central difference is meaningless there, so they are not scored.
    pub skipped_nonsmooth: usize,
    /// Worst scored error per parameter tensor name.
    pub per_param: BTreeMap<String, f64>,
    pub input_max_rel_error: Option<f64>,
}

pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(abs_floor)
}

fn validate(opts: &GradCheckOptions) -> Result<()> {
    if !(opts.eps > 0.0 && opts.eps.is_finite()) {
        return Err(Error::invalid(format!("gradient check needs eps > 0, got {}", opts.eps)));
    }
    Ok(())
}

fn finite(e: Evaluation) -> Result<Evaluation> {
    if e.loss.is_finite() {
        Ok(e)
    } else {
        Err(Error::NonFinite("gradient_check loss"))
    }
}

fn nudge<M: Module<f64>>(model: &mut M, mut index: usize, delta: f64) {
    let mut done = false;
    model.visit_params_mut(&mut |p| {
        if done {
            return;
        }
        if index < p.len() {
            p.value.data_mut()[index] += delta;
            done = true;
        } else {
            index -= p.len();
        }
    });
}

/// Compares the analytic gradient of every parameter element against
/// `(f(θ+eps) − f(θ−eps)) / (2·eps)` and returns the worst relative error.
///
/// `analytic` must leave the full gradient of `evaluate`'s loss in the
/// parameters' `grad` fields (it is called once, after `zero_grad`).
pub fn gradient_check<M: Module<f64>>(
    model: &mut M,
    mut evaluate: impl FnMut(&mut M) -> Result<Evaluation>,
    analytic: impl FnOnce(&mut M) -> Result<()>,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    validate(&opts)?;
    let base = finite(evaluate(model)?)?;
    model.zero_grad();
    analytic(model)?;

    let mut grads = Vec::new();
    let mut names = Vec::new();
    model.visit_params(&mut |p| {
        for (k, &g) in p.grad.data().iter().enumerate() {
            grads.push(g);
            names.push((p.name.clone(), k));
        }
    });

    let mut report = GradCheckReport::default();
    for (index, &analytic_grad) in grads.iter().enumerate() {
        nudge(model, index, opts.eps);
        let plus = finite(evaluate(model)?)?;
        nudge(model, index, -2.0 * opts.eps);
        let minus = finite(evaluate(model)?)?;
        nudge(model, index, opts.eps);
        if plus.regime != base.regime || minus.regime != base.regime {
            report.skipped_nonsmooth += 1;
            continue;
        }
        let numeric = (plus.loss - minus.loss) / (2.0 * opts.eps);
        let err = relative_error(analytic_grad, numeric, opts.abs_floor);
        report.checked += 1;
        let (name, k) = &names[index];
        let group = report.per_param.entry(name.clone()).or_insert(0.0);
        *group = group.max(err);
        if report.checked == 1 || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_param = format!("{name}[{k}]");
        }
    }
    Ok(report)
}

/// Gradient check of a single layer under the scalar loss `⟨forward(x), r⟩`
/// for a fixed random projection `r`. Also checks the input gradient.
pub fn check_module<M: Module<f64>>(
    module: &mut M,
    input: &Tensor<f64>,
    mut forward: impl FnMut(&mut M, &Tensor<f64>) -> Result<Tensor<f64>>,
    mut backward: impl FnMut(&mut M, &Tensor<f64>) -> Result<Tensor<f64>>,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    validate(&opts)?;
    let probe_shape = forward(module, input)?.shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let projection = Tensor::<f64>::uniform(&probe_shape, 1.0, &mut rng);

    let mut input_grad = None;
    let forward_cell = std::cell::RefCell::new(&mut forward);
    let mut report = gradient_check(
        module,
        |m| {
            let y = (forward_cell.borrow_mut())(m, input)?;
            Ok(Evaluation {
                loss: y.dot(&projection),
                regime: 0,
            })
        },
        |m| {
            (forward_cell.borrow_mut())(m, input)?;
            input_grad = Some(backward(m, &projection)?);
            Ok(())
        },
        opts,
    )?;

    let input_grad = input_grad.expect("analytic pass ran");
    let mut x = input.clone();
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let orig = x.data()[k];
        x.data_mut()[k] = orig + opts.eps;
        let plus = forward(module, &x)?.dot(&projection);
        x.data_mut()[k] = orig - opts.eps;
        let minus = forward(module, &x)?.dot(&projection);
        x.data_mut()[k] = orig;
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::NonFinite("gradient_check loss"));
        }
        let numeric = (plus - minus) / (2.0 * opts.eps);
        worst = worst.max(relative_error(input_grad.data()[k], numeric, opts.abs_floor));
    }
    report.input_max_rel_error = Some(worst);
    Ok(report)
}
