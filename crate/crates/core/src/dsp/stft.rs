//! 320-point STFT analysis and noisy-phase overlap-add resynthesis at 16 kHz.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::AudioSignal;
use crate::{Error, Result};

pub const N_FFT: usize = 320;
pub const HOP: usize = 160;
pub const N_BINS: usize = N_FFT / 2 + 1;
/// Power floor applied before taking the log.
pub const POWER_FLOOR: f64 = 1e-10;

/// Log power spectrum and phase, both `[T × 161]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFrameSequence {
    pub log_power: Vec<f64>,
    pub phase: Vec<f64>,
    pub frames: usize,
}

impl SpectralFrameSequence {
    pub fn log_power_frame(&self, t: usize) -> &[f64] {
        &self.log_power[t * N_BINS..(t + 1) * N_BINS]
    }

    /// Same phase, new log power (e.g. a model prediction).
    pub fn with_log_power(&self, log_power: Vec<f64>) -> Result<Self> {
        if log_power.len() != self.log_power.len() {
            return Err(Error::shape("with_log_power", &[log_power.len()], &[self.log_power.len()]));
        }
        Ok(Self {
            log_power,
            phase: self.phase.clone(),
            frames: self.frames,
        })
    }
}

/// Number of full frames in a signal of `len` samples.
pub fn frame_count(len: usize) -> usize {
    if len < N_FFT {
        0
    } else {
        1 + (len - N_FFT) / HOP
    }
}

/// Periodic Hann window; sums to a constant at 50% overlap.
pub fn hann_window() -> Vec<f64> {
    (0..N_FFT)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / N_FFT as f64).cos())
        .collect()
}

/// Lower bound on the summed squared window used for normalization. Interior
/// samples always see at least 0.5; only the first and last hop fall below,
/// where the output fades in and out instead of amplifying edge residue.
const WSS_FLOOR: f64 = 0.1;

/// Reusable FFT plans and window.
pub struct Stft {
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

impl Stft {
    pub fn new() -> Self {
        let mut planner = FftPlanner::new();
        Self {
            window: hann_window(),
            forward: planner.plan_fft_forward(N_FFT),
            inverse: planner.plan_fft_inverse(N_FFT),
        }
    }

    pub fn analyze(&self, signal: &AudioSignal) -> Result<SpectralFrameSequence> {
        let x = &signal.samples;
        if x.len() < N_FFT {
            return Err(Error::invalid(format!(
                "signal of {} samples is shorter than one {N_FFT}-point frame",
                x.len()
            )));
        }
        let frames = frame_count(x.len());
        let mut log_power = Vec::with_capacity(frames * N_BINS);
        let mut phase = Vec::with_capacity(frames * N_BINS);
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        for t in 0..frames {
            let start = t * HOP;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(x[start + k] as f64 * self.window[k], 0.0);
            }
            self.forward.process(&mut buf);
            for b in &buf[..N_BINS] {
                log_power.push(b.norm_sqr().max(POWER_FLOOR).ln());
                let mut p = b.im.atan2(b.re);
                if p <= -PI {
                    p = PI;
                }
                phase.push(p);
            }
        }
        Ok(SpectralFrameSequence {
            log_power,
            phase,
            frames,
        })
    }

    /// Weighted overlap-add with the Hann synthesis window, normalized by the
    /// summed squared window. Output length is `(T − 1)·160 + 320`.
    pub fn synthesize(&self, spec: &SpectralFrameSequence) -> Result<AudioSignal> {
        let t_frames = spec.frames;
        if t_frames == 0 || spec.log_power.len() != t_frames * N_BINS || spec.phase.len() != t_frames * N_BINS {
            return Err(Error::invalid("inconsistent spectral frame sequence"));
        }
        if spec.log_power.iter().chain(&spec.phase).any(|v| v.is_nan()) {
            return Err(Error::NonFinite("istft input"));
        }
        let len = (t_frames - 1) * HOP + N_FFT;
        let mut out = vec![0.0f64; len];
        let mut norm = vec![0.0f64; len];
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        for t in 0..t_frames {
            let lp = &spec.log_power[t * N_BINS..(t + 1) * N_BINS];
            let ph = &spec.phase[t * N_BINS..(t + 1) * N_BINS];
            for k in 0..N_BINS {
                let mag = (lp[k].exp()).sqrt();
                buf[k] = Complex::from_polar(mag, ph[k]);
            }
            // DC and Nyquist bins of a real signal are real.
            buf[0].im = 0.0;
            buf[N_BINS - 1].im = 0.0;
            for k in N_BINS..N_FFT {
                buf[k] = buf[N_FFT - k].conj();
            }
            self.inverse.process(&mut buf);
            let start = t * HOP;
            for k in 0..N_FFT {
                let w = self.window[k];
                out[start + k] += buf[k].re / N_FFT as f64 * w;
                norm[start + k] += w * w;
            }
        }
        let samples = out
            .iter()
            .zip(&norm)
            .map(|(&v, &n)| (v / n.max(WSS_FLOOR)) as f32)
            .collect();
        Ok(AudioSignal::new(samples))
    }
}

pub fn stft(signal: &AudioSignal) -> Result<SpectralFrameSequence> {
    Stft::new().analyze(signal)
}

pub fn istft(spec: &SpectralFrameSequence) -> Result<AudioSignal> {
    Stft::new().synthesize(spec)
}

/// Output length of [`istft`] for `frames` frames.
pub fn istft_len(frames: usize) -> usize {
    (frames.max(1) - 1) * HOP + N_FFT
}
