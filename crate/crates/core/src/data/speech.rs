use std::f64::consts::PI;

use rand::Rng;

use crate::dsp::stft::frame_count;
use crate::dsp::{AudioSignal, HOP, N_FFT, SAMPLE_RATE};
use crate::{Error, Result};

pub const MIN_DURATION_S: f64 = 0.5;
const PEAK: f32 = 0.5;
const MAX_HARMONIC_HZ: f64 = 7000.0;
/// Frames below this envelope value count as pauses.
pub const PAUSE_LEVEL: f64 = 0.05;
const MIN_PAUSE_FRACTION: f64 = 0.1;

struct Syllable {
    start: usize,
    len: usize,
    peak: f64,
    f0: f64,
    formants: [f64; 3],
}

fn formant_weight(f: f64, formants: &[f64; 3]) -> f64 {
    let bandwidths = [90.0, 140.0, 220.0];
    let gains = [1.0, 0.6, 0.3];
    let shaped: f64 = formants
        .iter()
        .zip(bandwidths)
        .zip(gains)
        .map(|((&c, bw), g)| g * (-0.5 * ((f - c) / bw).powi(2)).exp())
        .sum();
    shaped + 0.03
}

fn plan_syllables(n: usize, rng: &mut impl Rng) -> Vec<Syllable> {
    let sr = SAMPLE_RATE as f64;
    let base_f0 = rng.random_range(90.0..250.0);
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < n {
        let rate: f64 = rng.random_range(3.0..6.0);
        let len = ((sr / rate) as usize).min(n - pos);
        if rng.random_bool(0.72) {
            out.push(Syllable {
                start: pos,
                len,
                peak: rng.random_range(0.55..1.0),
                f0: base_f0 * rng.random_range(0.85..1.15),
                formants: [
                    rng.random_range(300.0..900.0),
                    rng.random_range(900.0..2500.0),
                    rng.random_range(2500.0..3500.0),
                ],
            });
        }
        pos += len;
    }
    out
}

fn frame_envelope(sample_env: &[f64]) -> Vec<f64> {
    (0..frame_count(sample_env.len()))
        .map(|t| sample_env[t * HOP + N_FFT / 2])
        .collect()
}

/// Speech-like signal: a gliding harmonic stack with formant emphasis,
/// gated by a syllabic envelope (3–6 Hz) with silent gaps.
///
/// Returns the signal (peak 0.5, `round(duration·16000)` samples) and the
/// envelope sampled at each STFT frame centre.
pub fn synth_speech(duration_s: f64, rng: &mut impl Rng) -> Result<(AudioSignal, Vec<f64>)> {
    if !(duration_s >= MIN_DURATION_S && duration_s.is_finite()) {
        return Err(Error::invalid(format!("speech duration must be at least {MIN_DURATION_S} s")));
    }
    let sr = SAMPLE_RATE as f64;
    let n = (duration_s * sr).round() as usize;
    loop {
        let syllables = plan_syllables(n, rng);
        let mut env = vec![0.0; n];
        for s in &syllables {
            for i in 0..s.len {
                env[s.start + i] = s.peak * (PI * i as f64 / s.len as f64).sin().powi(2);
            }
        }
        let frames = frame_envelope(&env);
        let paused = frames.iter().filter(|&&e| e < PAUSE_LEVEL).count();
        let voiced = frames.iter().any(|&e| e > 0.5);
        if (paused as f64) < MIN_PAUSE_FRACTION * frames.len() as f64 || !voiced {
            continue;
        }

        let mut samples = vec![0.0f64; n];
        let glide_rate = rng.random_range(0.3..1.2);
        let glide_phase = rng.random_range(0.0..2.0 * PI);
        for s in &syllables {
            let harmonics = (MAX_HARMONIC_HZ / (s.f0 * 1.1)) as usize;
            let weights: Vec<f64> = (1..=harmonics)
                .map(|k| formant_weight(k as f64 * s.f0, &s.formants) / (k as f64).sqrt())
                .collect();
            let mut phase = rng.random_range(0.0..2.0 * PI);
            for i in 0..s.len {
                let idx = s.start + i;
                let t = idx as f64 / sr;
                let f0 = s.f0 * (1.0 + 0.06 * (2.0 * PI * glide_rate * t + glide_phase).sin());
                phase = (phase + 2.0 * PI * f0 / sr) % (2.0 * PI);
                let v: f64 = weights.iter().enumerate().map(|(k, w)| w * ((k + 1) as f64 * phase).sin()).sum();
                samples[idx] = v * env[idx];
            }
        }
        let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if peak > 0.0 { PEAK as f64 / peak } else { 0.0 };
        let signal = AudioSignal::new(samples.iter().map(|v| (v * scale) as f32).collect());
        return Ok((signal, frames));
    }
}
