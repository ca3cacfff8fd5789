use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::speech::{synth_speech, MIN_DURATION_S};
use crate::dsp::{AudioSignal, SAMPLE_RATE};
use crate::{Error, Result};

const PEAK: f64 = 0.5;
const BABBLE_TALKERS: usize = 8;
pub const TRAFFIC_CUTOFF_HZ: f64 = 400.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseKind {
    Alarm,
    Crowd,
    Traffic,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Alarm, NoiseKind::Crowd, NoiseKind::Traffic];
    /// Noise families used for training; the rest are held out.
    pub const SEEN: [NoiseKind; 2] = [NoiseKind::Alarm, NoiseKind::Crowd];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Alarm => "alarm",
            NoiseKind::Crowd => "crowd",
            NoiseKind::Traffic => "traffic",
        }
    }

    pub fn is_seen(self) -> bool {
        Self::SEEN.contains(&self)
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown noise kind {s:?} (expected alarm, crowd or traffic)")))
    }
}

/// Timing and pitch of a generated alarm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlarmPattern {
    pub tones_hz: [f64; 2],
    pub beep_s: f64,
    /// Silence after each beep.
    pub gap_s: f64,
}

impl AlarmPattern {
    /// Which tone (0 or 1) sounds at time `t`, if any; ramps count as on.
    pub fn tone_at(&self, t: f64) -> Option<usize> {
        let slot = self.beep_s + self.gap_s;
        let phase = t % (2.0 * slot);
        let k = (phase >= slot) as usize;
        (phase - k as f64 * slot < self.beep_s).then_some(k)
    }

    /// One low beep plus one high beep, with their gaps.
    pub fn period_s(&self) -> f64 {
        2.0 * (self.beep_s + self.gap_s)
    }

    /// Fraction of time a tone sounds.
    pub fn duty_cycle(&self) -> f64 {
        self.beep_s / (self.beep_s + self.gap_s)
    }
}

fn samples_for(duration_s: f64) -> Result<usize> {
    if !(duration_s >= MIN_DURATION_S && duration_s.is_finite()) {
        return Err(Error::invalid(format!("noise duration must be at least {MIN_DURATION_S} s")));
    }
    Ok((duration_s * SAMPLE_RATE as f64).round() as usize)
}

fn peak_normalized(x: Vec<f64>) -> AudioSignal {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { PEAK / peak } else { 0.0 };
    AudioSignal::new(x.into_iter().map(|v| (v * scale) as f32).collect())
}

/// Hi-lo alarm: alternating two-tone beeps separated by short gaps, with
/// 5 ms ramps, over a −60 dB hiss floor.
pub fn synth_alarm(duration_s: f64, rng: &mut impl Rng) -> Result<(AudioSignal, AlarmPattern)> {
    let n = samples_for(duration_s)?;
    let pattern = AlarmPattern {
        tones_hz: [rng.random_range(700.0..1100.0), rng.random_range(1300.0..2200.0)],
        beep_s: rng.random_range(0.18..0.30),
        gap_s: rng.random_range(0.02..0.05),
    };
    let sr = SAMPLE_RATE as f64;
    let ramp = 0.005;
    let x = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let floor = 1e-3 * rng.sample::<f64, _>(StandardNormal);
            let Some(k) = pattern.tone_at(t) else {
                return floor;
            };
            let local = t % pattern.period_s() - k as f64 * (pattern.beep_s + pattern.gap_s);
            let gate = (local / ramp).min((pattern.beep_s - local) / ramp).clamp(0.0, 1.0);
            gate * (2.0 * PI * pattern.tones_hz[k] * t).sin() + floor
        })
        .collect();
    Ok((peak_normalized(x), pattern))
}

/// Babble: several independent speech-like talkers summed.
pub fn synth_crowd(duration_s: f64, rng: &mut impl Rng) -> Result<AudioSignal> {
    let n = samples_for(duration_s)?;
    let mut sum = vec![0.0f64; n];
    for _ in 0..BABBLE_TALKERS {
        let (talker, _) = synth_speech(duration_s, rng)?;
        for (s, &v) in sum.iter_mut().zip(&talker.samples) {
            *s += v as f64;
        }
    }
    Ok(peak_normalized(sum))
}

/// Second-order Butterworth low-pass (bilinear transform).
fn lowpass(x: &[f64], cutoff_hz: f64) -> Vec<f64> {
    let w0 = 2.0 * PI * cutoff_hz / SAMPLE_RATE as f64;
    let alpha = w0.sin() / std::f64::consts::SQRT_2;
    let cos = w0.cos();
    let a0 = 1.0 + alpha;
    let b0 = (1.0 - cos) / 2.0 / a0;
    let b1 = (1.0 - cos) / a0;
    let b2 = b0;
    let a1 = -2.0 * cos / a0;
    let a2 = (1.0 - alpha) / a0;
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    x.iter()
        .map(|&x0| {
            let y0 = b0 * x0 + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
            (x2, x1, y2, y1) = (x1, x0, y1, y0);
            y0
        })
        .collect()
}

/// Rumble: leaky-integrated white noise, low-passed twice at 400 Hz, with
/// slow amplitude modulation.
pub fn synth_traffic(duration_s: f64, rng: &mut impl Rng) -> Result<AudioSignal> {
    let n = samples_for(duration_s)?;
    let mut acc = 0.0;
    let integrated: Vec<f64> = (0..n)
        .map(|_| {
            acc = 0.995 * acc + rng.sample::<f64, _>(StandardNormal);
            acc
        })
        .collect();
    let filtered = lowpass(&lowpass(&integrated, TRAFFIC_CUTOFF_HZ), TRAFFIC_CUTOFF_HZ);
    let mean = filtered.iter().sum::<f64>() / n as f64;
    let rate = rng.random_range(0.2..1.0);
    let phase = rng.random_range(0.0..2.0 * PI);
    let sr = SAMPLE_RATE as f64;
    let x = filtered
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean) * (1.0 + 0.5 * (2.0 * PI * rate * i as f64 / sr + phase).sin()))
        .collect();
    Ok(peak_normalized(x))
}

pub fn synth_noise(kind: NoiseKind, duration_s: f64, rng: &mut impl Rng) -> Result<AudioSignal> {
    match kind {
        NoiseKind::Alarm => Ok(synth_alarm(duration_s, rng)?.0),
        NoiseKind::Crowd => synth_crowd(duration_s, rng),
        NoiseKind::Traffic => synth_traffic(duration_s, rng),
    }
}
