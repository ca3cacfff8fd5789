//! Mixes synthetic speech with each noise family at several SNRs and
//! re-measures the achieved SNR from the mixture.

use avse::data::{synth_noise, synth_speech, NoiseKind};
use avse::dsp::{mix_at_snr, snr_db};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> avse::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (clean, _) = synth_speech(2.0, &mut rng)?;
    for kind in NoiseKind::ALL {
        let noise = synth_noise(kind, 4.0, &mut rng)?;
        for target in [-6.0, 0.0, 9.0] {
            let mix = mix_at_snr(&clean, &noise, target, 8_000)?;
            let residual: Vec<f32> = mix.samples.iter().zip(&clean.samples).map(|(m, c)| m - c).collect();
            println!(
                "{:<8} target {:>5.1} dB  measured {:>8.4} dB  peak {:.3}",
                kind.name(),
                target,
                snr_db(&clean.samples, &residual),
                mix.peak()
            );
        }
    }
    Ok(())
}
