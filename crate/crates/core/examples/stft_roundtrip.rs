//! Analysis/synthesis round trip of a chirp, reporting reconstruction SNR.

use std::f64::consts::PI;

use avse::dsp::{istft, snr_db, stft, AudioSignal, HOP, N_FFT};

fn main() -> avse::Result<()> {
    let n = 32_000;
    let samples: Vec<f32> = (0..n)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            (0.4 * (2.0 * PI * (200.0 + 900.0 * t) * t).sin()) as f32
        })
        .collect();
    let x = AudioSignal::new(samples);
    let spec = stft(&x)?;
    let y = istft(&spec)?;
    println!("{} samples -> {} frames -> {} samples", x.len(), spec.frames, y.len());

    // The first and last hop lack full window overlap.
    let interior = HOP..y.len() - N_FFT;
    let err: Vec<f32> = interior.clone().map(|i| y.samples[i] - x.samples[i]).collect();
    println!("interior reconstruction SNR: {:.1} dB", snr_db(&x.samples[interior], &err));
    Ok(())
}
