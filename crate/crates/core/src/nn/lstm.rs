//! Standard LSTM (no peepholes) with gates stacked as (input, forget, cell, output).

use std::ops::Range;

use rand::Rng;

use super::activation::sigmoid;
use super::tensor::ensure_rank;
use super::{glorot_limit, Module, Param, Real, Tensor};
use crate::{Error, Result};

pub const FORGET_BIAS_INIT: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct LstmCellParams<R> {
    /// `[4H × D_in]`
    pub w_x: Param<R>,
    /// `[4H × H]`
    pub w_h: Param<R>,
    /// `[4H]`
    pub bias: Param<R>,
}

impl<R: Real> LstmCellParams<R> {
    pub fn new(name: &str, d_in: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(R::of(FORGET_BIAS_INIT));
        Self {
            w_x: Param::new(
                format!("{name}.w_x"),
                Tensor::uniform(&[4 * hidden, d_in], glorot_limit(d_in, 4 * hidden), rng),
            ),
            w_h: Param::new(
                format!("{name}.w_h"),
                Tensor::uniform(&[4 * hidden, hidden], glorot_limit(hidden, 4 * hidden), rng),
            ),
            bias: Param::new(format!("{name}.bias"), bias),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.value.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.value.shape()[1]
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden();
        let d = self.input_dim();
        if self.w_x.value.shape() != [4 * h, d]
            || self.w_h.value.shape() != [4 * h, h]
            || self.bias.value.shape() != [4 * h]
        {
            return Err(Error::shape("lstm params", self.w_x.value.shape(), self.w_h.value.shape()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<R> {
    pub h: Tensor<R>,
    pub c: Tensor<R>,
}

impl<R: Real> LstmState<R> {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: Tensor::zeros(&[hidden]),
            c: Tensor::zeros(&[hidden]),
        }
    }
}

/// Applies the gate nonlinearities in place to one row of pre-activations
/// and advances `(h, c)`. Returns `tanh(c')`.
#[inline]
fn cell_update<R: Real>(gates: &mut [R], c_prev: &[R], c: &mut [R], h: &mut [R], tanh_c: &mut [R]) {
    let hidden = c.len();
    let (i, rest) = gates.split_at_mut(hidden);
    let (f, rest) = rest.split_at_mut(hidden);
    let (g, o) = rest.split_at_mut(hidden);
    for k in 0..hidden {
        i[k] = sigmoid(i[k]);
        f[k] = sigmoid(f[k]);
        g[k] = g[k].tanh();
        o[k] = sigmoid(o[k]);
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        tanh_c[k] = c[k].tanh();
        h[k] = o[k] * tanh_c[k];
    }
}

/// One LSTM time step for a single (unbatched) input vector.
pub fn lstm_step<R: Real>(x: &Tensor<R>, state: &LstmState<R>, params: &LstmCellParams<R>) -> Result<LstmState<R>> {
    params.check()?;
    let (d, h) = (params.input_dim(), params.hidden());
    if x.len() != d {
        return Err(Error::shape("lstm_step", x.shape(), params.w_x.value.shape()));
    }
    if state.h.len() != h || state.c.len() != h {
        return Err(Error::shape("lstm_step", state.h.shape(), params.w_h.value.shape()));
    }
    let mut pre = params.bias.value.data().to_vec();
    R::gemm(false, true, 1, 4 * h, d, R::one(), x.data(), params.w_x.value.data(), R::one(), &mut pre);
    R::gemm(false, true, 1, 4 * h, h, R::one(), state.h.data(), params.w_h.value.data(), R::one(), &mut pre);
    let mut next = LstmState::zeros(h);
    let mut tanh_c = vec![R::zero(); h];
    cell_update(&mut pre, state.c.data(), next.c.data_mut(), next.h.data_mut(), &mut tanh_c);
    Ok(next)
}

#[derive(Clone, Debug)]
struct SeqCache<R> {
    x: Tensor<R>,
    gates: Vec<R>,
    c_prev: Vec<R>,
    tanh_c: Vec<R>,
    h_prev: Vec<R>,
    segments: Vec<Range<usize>>,
}

/// An LSTM unrolled over one or more independent sequences packed row-wise
/// into a `[N × D_in]` matrix. Each segment starts from a zero state; a
/// `reverse` layer runs each segment from its last row to its first.
#[derive(Clone, Debug)]
pub struct Lstm<R> {
    pub params: LstmCellParams<R>,
    pub reverse: bool,
    cache: Option<SeqCache<R>>,
}

fn step_order(seg: &Range<usize>, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new(seg.clone().rev())
    } else {
        Box::new(seg.clone())
    }
}

pub(crate) fn validate_segments(segments: &[Range<usize>], rows: usize) -> Result<()> {
    if segments.is_empty() {
        return Err(Error::invalid("empty sequence"));
    }
    // Segments must tile 0..rows in order.
    let mut next = 0;
    for s in segments {
        if s.start != next || s.start >= s.end || s.end > rows {
            return Err(Error::invalid(format!("segment {s:?} invalid for {rows} rows")));
        }
        next = s.end;
    }
    if next != rows {
        return Err(Error::invalid(format!("segments cover {next} of {rows} rows")));
    }
    Ok(())
}

impl<R: Real> Lstm<R> {
    pub fn new(name: &str, d_in: usize, hidden: usize, reverse: bool, rng: &mut impl Rng) -> Self {
        Self {
            params: LstmCellParams::new(name, d_in, hidden, rng),
            reverse,
            cache: None,
        }
    }

    pub fn hidden(&self) -> usize {
        self.params.hidden()
    }

    pub fn forward(&mut self, x: &Tensor<R>, segments: &[Range<usize>]) -> Result<Tensor<R>> {
        ensure_rank("lstm forward", x, 2)?;
        self.params.check()?;
        let (n, d) = (x.shape()[0], x.shape()[1]);
        let h = self.hidden();
        if d != self.params.input_dim() {
            return Err(Error::shape("lstm forward", x.shape(), self.params.w_x.value.shape()));
        }
        validate_segments(segments, n)?;
        let g4 = 4 * h;
        let mut gates = vec![R::zero(); n * g4];
        for row in gates.chunks_exact_mut(g4) {
            row.copy_from_slice(self.params.bias.value.data());
        }
        R::gemm(false, true, n, g4, d, R::one(), x.data(), self.params.w_x.value.data(), R::one(), &mut gates);

        let mut c = vec![R::zero(); n * h];
        let mut c_prev = vec![R::zero(); n * h];
        let mut tanh_c = vec![R::zero(); n * h];
        let mut h_prev = vec![R::zero(); n * h];
        let mut out = Tensor::zeros(&[n, h]);
        let w_h = self.params.w_h.value.data();
        for seg in segments {
            let mut prev: Option<usize> = None;
            for t in step_order(seg, self.reverse) {
                if let Some(p) = prev {
                    let (hp, cp) = (out.row(p).to_vec(), c[p * h..(p + 1) * h].to_vec());
                    R::gemm(false, true, 1, g4, h, R::one(), &hp, w_h, R::one(), &mut gates[t * g4..(t + 1) * g4]);
                    h_prev[t * h..(t + 1) * h].copy_from_slice(&hp);
                    c_prev[t * h..(t + 1) * h].copy_from_slice(&cp);
                }
                let (cp, ct) = (c_prev[t * h..(t + 1) * h].to_vec(), &mut c[t * h..(t + 1) * h]);
                cell_update(
                    &mut gates[t * g4..(t + 1) * g4],
                    &cp,
                    ct,
                    &mut out.data_mut()[t * h..(t + 1) * h],
                    &mut tanh_c[t * h..(t + 1) * h],
                );
                prev = Some(t);
            }
        }
        self.cache = Some(SeqCache {
            x: x.clone(),
            gates,
            c_prev,
            tanh_c,
            h_prev,
            segments: segments.to_vec(),
        });
        Ok(out)
    }

    /// Backpropagation through time over every cached segment.
    pub fn backward(&mut self, grad_out: &Tensor<R>) -> Result<Tensor<R>> {
        let cache = self.cache.as_ref().ok_or_else(|| Error::invalid("Lstm::backward before forward"))?;
        let h = self.hidden();
        let g4 = 4 * h;
        let (n, d) = (cache.x.shape()[0], cache.x.shape()[1]);
        if grad_out.shape() != [n, h] {
            return Err(Error::shape("lstm backward", grad_out.shape(), &[n, h]));
        }
        let w_h = self.params.w_h.value.data();
        let mut dpre = vec![R::zero(); n * g4];
        let mut dh_next = vec![R::zero(); h];
        let mut dc_next = vec![R::zero(); h];
        let mut dh = vec![R::zero(); h];
        for seg in &cache.segments {
            dh_next.fill(R::zero());
            dc_next.fill(R::zero());
            let order: Vec<usize> = step_order(seg, self.reverse).collect();
            for (pos, &t) in order.iter().enumerate().rev() {
                let gate = &cache.gates[t * g4..(t + 1) * g4];
                let (i, f, g, o) = (&gate[..h], &gate[h..2 * h], &gate[2 * h..3 * h], &gate[3 * h..]);
                let tc = &cache.tanh_c[t * h..(t + 1) * h];
                let cp = &cache.c_prev[t * h..(t + 1) * h];
                let go = grad_out.row(t);
                let dp = &mut dpre[t * g4..(t + 1) * g4];
                for k in 0..h {
                    dh[k] = go[k] + dh_next[k];
                    let d_o = dh[k] * tc[k];
                    let dc = dc_next[k] + dh[k] * o[k] * (R::one() - tc[k] * tc[k]);
                    let di = dc * g[k];
                    let dg = dc * i[k];
                    let df = dc * cp[k];
                    dc_next[k] = dc * f[k];
                    dp[k] = di * i[k] * (R::one() - i[k]);
                    dp[h + k] = df * f[k] * (R::one() - f[k]);
                    dp[2 * h + k] = dg * (R::one() - g[k] * g[k]);
                    dp[3 * h + k] = d_o * o[k] * (R::one() - o[k]);
                }
                if pos > 0 {
                    R::gemm(false, false, 1, h, g4, R::one(), dp, w_h, R::zero(), &mut dh_next);
                }
            }
        }
        R::gemm(true, false, g4, h, n, R::one(), &dpre, &cache.h_prev, R::one(), self.params.w_h.grad.data_mut());
        R::gemm(true, false, g4, d, n, R::one(), &dpre, cache.x.data(), R::one(), self.params.w_x.grad.data_mut());
        let bg = self.params.bias.grad.data_mut();
        for row in dpre.chunks_exact(g4) {
            for (acc, &v) in bg.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut gx = Tensor::zeros(&[n, d]);
        R::gemm(false, false, n, d, g4, R::one(), &dpre, self.params.w_x.value.data(), R::zero(), gx.data_mut());
        Ok(gx)
    }
}

impl<R: Real> Module<R> for Lstm<R> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<R>)) {
        f(&self.params.w_x);
        f(&self.params.w_h);
        f(&self.params.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<R>)) {
        f(&mut self.params.w_x);
        f(&mut self.params.w_h);
        f(&mut self.params.bias);
    }
}
