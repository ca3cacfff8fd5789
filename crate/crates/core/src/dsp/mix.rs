use super::AudioSignal;
use crate::{Error, Result};

pub fn mean_square(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / x.len() as f64
}

/// `10·log10(P_signal / P_noise)` from mean-square powers.
pub fn snr_db(signal: &[f32], noise: &[f32]) -> f64 {
    10.0 * (mean_square(signal) / mean_square(noise)).log10()
}

/// Adds `noise` to `clean` at the requested SNR.
///
/// The noise is read starting at `offset` and wrapped around when it is
/// shorter than the clean signal. Powers are mean squares over the clean
/// duration, so the returned mixture has exactly `snr_db` between `clean`
/// and the scaled noise segment.
pub fn mix_at_snr(clean: &AudioSignal, noise: &AudioSignal, snr: f64, offset: usize) -> Result<AudioSignal> {
    Ok(mix_with_gain(clean, noise, snr, offset)?.0)
}

/// As [`mix_at_snr`], also returning the noise gain applied.
pub fn mix_with_gain(clean: &AudioSignal, noise: &AudioSignal, snr: f64, offset: usize) -> Result<(AudioSignal, f64)> {
    if clean.sample_rate != noise.sample_rate {
        return Err(Error::invalid(format!(
            "sample rate mismatch: {} vs {}",
            clean.sample_rate, noise.sample_rate
        )));
    }
    if noise.is_empty() || mean_square(&noise.samples) == 0.0 {
        return Err(Error::invalid("noise signal is silent"));
    }
    let p_clean = mean_square(&clean.samples);
    if p_clean == 0.0 {
        return Err(Error::invalid("clean signal is silent"));
    }
    let n = noise.len();
    let segment: Vec<f64> = (0..clean.len()).map(|i| noise.samples[(offset + i) % n] as f64).collect();
    let p_noise = segment.iter().map(|v| v * v).sum::<f64>() / segment.len() as f64;
    if p_noise == 0.0 {
        return Err(Error::invalid("noise segment is silent"));
    }
    let gain = (p_clean / (p_noise * 10f64.powf(snr / 10.0))).sqrt();
    let samples = clean
        .samples
        .iter()
        .zip(&segment)
        .map(|(&c, &v)| (c as f64 + gain * v) as f32)
        .collect();
    Ok((
        AudioSignal {
            samples,
            sample_rate: clean.sample_rate,
        },
        gain,
    ))
}
