use std::f64::consts::LN_10;

use crate::dsp::N_FFT;
use crate::{Error, Result};

pub const SEGSNR_MIN_DB: f64 = -10.0;
pub const SEGSNR_MAX_DB: f64 = 35.0;
/// Segments whose reference mean-square power is below this are skipped.
pub const SILENCE_POWER: f64 = 1e-8;
pub const SEGMENT_LEN: usize = N_FFT;

/// Mean squared difference over all elements (truncated to the shorter input).
pub fn metric_mse(pred: &[f64], reference: &[f64]) -> Result<f64> {
    let n = pred.len().min(reference.len());
    if n == 0 {
        return Err(Error::invalid("MSE of empty inputs"));
    }
    Ok(pred[..n].iter().zip(&reference[..n]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64)
}

/// Log-spectral distance in dB between natural-log power spectra `[T × bins]`.
pub fn metric_lsd(pred: &[f64], reference: &[f64], bins: usize) -> Result<f64> {
    let frames = pred.len().min(reference.len()) / bins.max(1);
    if frames == 0 {
        return Err(Error::invalid("LSD needs at least one whole frame"));
    }
    let scale = 10.0 / LN_10;
    let total: f64 = (0..frames)
        .map(|t| {
            let r = t * bins..(t + 1) * bins;
            let ms = pred[r.clone()]
                .iter()
                .zip(&reference[r])
                .map(|(p, c)| (scale * (p - c)).powi(2))
                .sum::<f64>()
                / bins as f64;
            ms.sqrt()
        })
        .sum();
    Ok(total / frames as f64)
}

/// Segmental SNR of `signal` against `reference` over 320-sample segments,
/// each clamped to [−10, 35] dB; silent reference segments are skipped.
pub fn metric_segsnr(signal: &[f32], reference: &[f32]) -> Result<f64> {
    let n = signal.len().min(reference.len());
    let mut total = 0.0;
    let mut count = 0usize;
    for start in (0..n).step_by(SEGMENT_LEN) {
        let end = (start + SEGMENT_LEN).min(n);
        let (mut p_ref, mut p_err) = (0.0f64, 0.0f64);
        for i in start..end {
            let r = reference[i] as f64;
            let e = r - signal[i] as f64;
            p_ref += r * r;
            p_err += e * e;
        }
        if p_ref / ((end - start) as f64) < SILENCE_POWER {
            continue;
        }
        let snr = if p_err == 0.0 {
            SEGSNR_MAX_DB
        } else {
            10.0 * (p_ref / p_err).log10()
        };
        total += snr.clamp(SEGSNR_MIN_DB, SEGSNR_MAX_DB);
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid("segmental SNR of an all-silent reference"));
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_inputs_are_perfect() {
        let x: Vec<f64> = (0..322).map(|i| (i as f64 * 0.1).sin()).collect();
        assert_eq!(metric_mse(&x, &x).unwrap(), 0.0);
        assert_eq!(metric_lsd(&x, &x, 161).unwrap(), 0.0);
        let s: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        assert_eq!(metric_segsnr(&s, &s).unwrap(), SEGSNR_MAX_DB);
    }

    #[test]
    fn constant_log_offset_gives_closed_form_lsd() {
        let c = 0.7;
        let x: Vec<f64> = (0..161 * 3).map(|i| (i as f64).cos()).collect();
        let y: Vec<f64> = x.iter().map(|v| v + c).collect();
        let lsd = metric_lsd(&y, &x, 161).unwrap();
        assert!((lsd - 10.0 / LN_10 * c).abs() < 1e-12);
    }

    #[test]
    fn unit_gain_noise_at_zero_db_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clean: Vec<f32> = (0..32000).map(|_| rng.random_range(-0.5f32..0.5)).collect();
        let noise: Vec<f32> = (0..32000).map(|_| rng.random_range(-0.5f32..0.5)).collect();
        let mix: Vec<f32> = clean.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let s = metric_segsnr(&mix, &clean).unwrap();
        assert!(s.abs() < 0.3, "{s}");
    }

    #[test]
    fn clamping_and_silence() {
        let reference = vec![0.5f32; 640];
        let bad = vec![-100.0f32; 640];
        assert_eq!(metric_segsnr(&bad, &reference).unwrap(), SEGSNR_MIN_DB);
        assert!(metric_segsnr(&bad, &[0.0; 640]).is_err());
        // The silent second half is ignored rather than clamped.
        let mut half = vec![0.5f32; 320];
        half.extend(vec![0.0f32; 320]);
        let noisy: Vec<f32> = half.iter().map(|v| v + 0.05).collect();
        assert!((metric_segsnr(&noisy, &half).unwrap() - 20.0).abs() < 1e-4);
    }

    #[test]
    fn inputs_are_truncated_to_the_shorter() {
        assert_eq!(metric_mse(&[1.0, 2.0, 9.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(metric_mse(&[], &[1.0]).is_err());
    }
}
