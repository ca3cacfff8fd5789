//! Writes clean, noisy and oracle-magnitude spectrograms of one utterance as PGM images.

use avse::data::{synth_noise, synth_speech, NoiseKind};
use avse::dsp::{istft, mix_at_snr, stft, N_BINS};
use avse::eval::export_spectrogram;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> avse::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| ".".into());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (clean, _) = synth_speech(2.0, &mut rng)?;
    let noise = synth_noise(NoiseKind::Alarm, 3.0, &mut rng)?;
    let noisy = mix_at_snr(&clean, &noise, 0.0, 0)?;

    let clean_spec = stft(&clean)?;
    let noisy_spec = stft(&noisy)?;
    // Clean magnitude with noisy phase: the best a magnitude-only enhancer can do.
    let oracle = stft(&istft(&noisy_spec.with_log_power(clean_spec.log_power.clone())?)?)?;
    for (name, spec) in [("clean", &clean_spec), ("noisy", &noisy_spec), ("oracle", &oracle)] {
        let path = std::path::Path::new(&dir).join(format!("{name}.pgm"));
        let img = export_spectrogram(&spec.log_power, N_BINS, &path)?;
        println!("{} ({}x{})", path.display(), img.width, img.height);
    }
    Ok(())
}
