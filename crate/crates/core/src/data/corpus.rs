use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lips::{synth_lips, LipFrames};
use super::manifest::{
    read_lips, write_lips, CorpusSpec, DatasetManifest, ManifestRecord, Split, TEST_SNRS, TRAIN_SNR_RANGE,
};
use super::noise::{synth_noise, NoiseKind};
use super::speech::synth_speech;
use crate::dsp::stft::frame_count;
use crate::dsp::wav::{read_wav, write_wav};
use crate::dsp::{mix_at_snr, AudioSignal};
use crate::{Error, Result};

/// Mixtures whose peak would exceed this are scaled down together with their clean reference.
const MAX_PEAK: f32 = 0.99;

/// Independent generator for one `(domain, index)` pair under a master seed.
fn derived_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 40) | index);
    rng
}

const DOMAIN_NOISE: u64 = 1;
const DOMAIN_TRAIN: u64 = 2;
const DOMAIN_TEST: u64 = 3;

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Mixes and rescales jointly so the mixture never clips; SNR is unchanged.
fn corrupt(clean: &AudioSignal, noise: &AudioSignal, snr: f64, offset: usize) -> Result<(AudioSignal, AudioSignal)> {
    let mut noisy = mix_at_snr(clean, noise, snr, offset)?;
    let mut clean = clean.clone();
    let peak = noisy.peak();
    if peak > MAX_PEAK {
        let g = MAX_PEAK / peak;
        noisy.samples.iter_mut().for_each(|v| *v *= g);
        clean.samples.iter_mut().for_each(|v| *v *= g);
    }
    Ok((clean, noisy))
}

struct Writer<'a> {
    root: &'a Path,
    records: Vec<ManifestRecord>,
}

impl Writer<'_> {
    #[allow(clippy::too_many_arguments)]
    fn add(
        &mut self,
        id: String,
        split: Split,
        clean: &AudioSignal,
        noise: &AudioSignal,
        kind: NoiseKind,
        snr: i32,
        offset: usize,
        lips_path: &Path,
    ) -> Result<()> {
        let (clean, noisy) = corrupt(clean, noise, snr as f64, offset)?;
        let clean_path = PathBuf::from("clean").join(format!("{id}.wav"));
        let corrupted_path = PathBuf::from("noisy").join(format!("{id}.wav"));
        write_wav(self.root.join(&clean_path), &clean)?;
        write_wav(self.root.join(&corrupted_path), &noisy)?;
        self.records.push(ManifestRecord {
            id,
            split,
            clean_path,
            corrupted_path,
            lips_path: lips_path.to_path_buf(),
            noise_kind: kind,
            snr_db: snr as f64,
        });
        Ok(())
    }
}

/// Generates every recording, lip file and corruption of `spec` under `out_dir`
/// and writes `manifest.tsv`, `train.tsv` and `test.tsv`.
///
/// Training recordings are corrupted once by each seen noise kind at a random
/// integral SNR; test recordings by every kind at every test SNR. Each
/// corruption reads its noise from a random offset of a per-split noise clip.
pub fn build_corpus(spec: &CorpusSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    spec.validate()?;
    let root = out_dir.as_ref();
    for sub in ["clean", "noisy", "lips"] {
        create_dir(&root.join(sub))?;
    }
    let mut noise = HashMap::new();
    for (s, split) in [Split::Train, Split::Test].into_iter().enumerate() {
        for (k, kind) in NoiseKind::ALL.into_iter().enumerate() {
            if split == Split::Train && !kind.is_seen() {
                continue;
            }
            let mut rng = derived_rng(spec.seed, DOMAIN_NOISE, (s * 8 + k) as u64);
            noise.insert((split, kind), synth_noise(kind, spec.noise_clip_s, &mut rng)?);
        }
    }

    let mut w = Writer {
        root,
        records: Vec::new(),
    };
    for (split, count, domain) in [
        (Split::Train, spec.n_train, DOMAIN_TRAIN),
        (Split::Test, spec.n_test, DOMAIN_TEST),
    ] {
        for i in 0..count {
            let mut rng = derived_rng(spec.seed, domain, i as u64);
            let source = format!("{}{i:04}", split.name());
            let duration = rng.random_range(spec.min_duration_s..=spec.max_duration_s);
            let (clean, envelope) = synth_speech(duration, &mut rng)?;
            let lips = synth_lips(&envelope, &mut rng)?;
            let lips_path = PathBuf::from("lips").join(format!("{source}.lips"));
            write_lips(root.join(&lips_path), &lips)?;
            match split {
                Split::Train => {
                    for kind in NoiseKind::SEEN {
                        let clip = &noise[&(split, kind)];
                        let snr = rng.random_range(TRAIN_SNR_RANGE.0..=TRAIN_SNR_RANGE.1);
                        let offset = rng.random_range(0..clip.len());
                        w.add(format!("{source}_{kind}"), split, &clean, clip, kind, snr, offset, &lips_path)?;
                    }
                }
                Split::Test => {
                    for kind in NoiseKind::ALL {
                        let clip = &noise[&(split, kind)];
                        for snr in TEST_SNRS {
                            let offset = rng.random_range(0..clip.len());
                            let id = format!("{source}_{kind}_snr{snr}");
                            w.add(id, split, &clean, clip, kind, snr, offset, &lips_path)?;
                        }
                    }
                }
            }
        }
    }
    let manifest = DatasetManifest {
        spec: Some(spec.clone()),
        root: root.to_path_buf(),
        records: w.records,
    };
    manifest.check_hygiene()?;
    manifest.write(root.join("manifest.tsv"))?;
    manifest.split(Split::Train).write(root.join("train.tsv"))?;
    manifest.split(Split::Test).write(root.join("test.tsv"))?;
    Ok(manifest)
}

/// One manifest record with its audio and lip frames in memory.
#[derive(Clone, Debug)]
pub struct Utterance {
    pub record: ManifestRecord,
    pub clean: AudioSignal,
    pub corrupted: AudioSignal,
    /// Shared between the corruptions of one clean recording.
    pub lips: Arc<LipFrames>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub utterances: Vec<Utterance>,
}

/// Loads and validates every record of `manifest`.
pub fn load_records(manifest: &DatasetManifest) -> Result<Vec<Utterance>> {
    let mut lips_cache: HashMap<PathBuf, Arc<LipFrames>> = HashMap::new();
    let mut out = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        let clean = read_wav(manifest.resolve(&r.clean_path))?;
        let corrupted = read_wav(manifest.resolve(&r.corrupted_path))?;
        if clean.len() != corrupted.len() {
            return Err(Error::format(
                r.id.clone(),
                format!("clean has {} samples, corrupted {}", clean.len(), corrupted.len()),
            ));
        }
        let lips_path = manifest.resolve(&r.lips_path);
        let lips = match lips_cache.get(&lips_path) {
            Some(l) => l.clone(),
            None => {
                let l = Arc::new(read_lips(&lips_path)?);
                lips_cache.insert(lips_path.clone(), l.clone());
                l
            }
        };
        let frames = frame_count(clean.len());
        if lips.frames != frames {
            return Err(Error::format(
                r.id.clone(),
                format!("{} lip frames but {frames} audio frames", lips.frames),
            ));
        }
        out.push(Utterance {
            record: r.clone(),
            clean,
            corrupted,
            lips,
        });
    }
    Ok(out)
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let utterances = load_records(&manifest)?;
    Ok(Dataset { manifest, utterances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::snr_db;

    fn tiny_spec(seed: u64) -> CorpusSpec {
        CorpusSpec {
            n_train: 3,
            n_test: 2,
            min_duration_s: 0.6,
            max_duration_s: 1.0,
            noise_clip_s: 2.0,
            seed,
        }
    }

    #[test]
    fn corpus_structure_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_corpus(&tiny_spec(1), dir.path()).unwrap();
        let train = m.split(Split::Train);
        let test = m.split(Split::Test);
        assert_eq!(train.records.len(), 3 * NoiseKind::SEEN.len());
        assert_eq!(test.records.len(), 2 * 3 * 6);
        assert!(train.records.iter().all(|r| r.noise_kind != NoiseKind::Traffic));
        assert!(train.records.iter().all(|r| (-5.0..=5.0).contains(&r.snr_db) && r.snr_db.fract() == 0.0));

        let loaded = load_dataset(dir.path().join("manifest.tsv")).unwrap();
        assert_eq!(loaded.manifest.records, m.records);
        assert_eq!(loaded.utterances.len(), m.records.len());
        for u in &loaded.utterances {
            assert_eq!(u.lips.frames, frame_count(u.clean.len()));
            let noise: Vec<f32> = u.corrupted.samples.iter().zip(&u.clean.samples).map(|(a, b)| a - b).collect();
            let measured = snr_db(&u.clean.samples, &noise);
            assert!((measured - u.record.snr_db).abs() < 0.01, "{}: {measured}", u.record.id);
            assert!(u.corrupted.peak() <= 1.0);
        }
        assert_eq!(DatasetManifest::read(dir.path().join("test.tsv")).unwrap().records, test.records);
    }

    #[test]
    fn corpus_is_a_function_of_spec_and_seed() {
        let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = build_corpus(&tiny_spec(4), a.path()).unwrap();
        build_corpus(&tiny_spec(4), b.path()).unwrap();
        build_corpus(&tiny_spec(5), c.path()).unwrap();
        for r in &ma.records {
            for p in [&r.clean_path, &r.corrupted_path, &r.lips_path] {
                let x = std::fs::read(a.path().join(p)).unwrap();
                assert_eq!(x, std::fs::read(b.path().join(p)).unwrap(), "{}", p.display());
            }
        }
        let p = &ma.records[0].corrupted_path;
        assert_ne!(std::fs::read(a.path().join(p)).unwrap(), std::fs::read(c.path().join(p)).unwrap());
        let text = |d: &Path| std::fs::read_to_string(d.join("manifest.tsv")).unwrap();
        assert_eq!(text(a.path()).replace(&a.path().display().to_string(), ""), text(b.path()).replace(&b.path().display().to_string(), ""));
    }

    #[test]
    fn missing_or_inconsistent_files_fail_loudly() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_corpus(&tiny_spec(2), dir.path()).unwrap();
        let victim = dir.path().join(&m.records[1].corrupted_path);
        std::fs::remove_file(&victim).unwrap();
        let err = load_dataset(dir.path().join("manifest.tsv")).unwrap_err().to_string();
        assert!(err.contains(&m.records[1].corrupted_path.display().to_string()), "{err}");

        let dir = tempfile::tempdir().unwrap();
        let m = build_corpus(&tiny_spec(2), dir.path()).unwrap();
        let lips = dir.path().join(&m.records[0].lips_path);
        let mut frames = read_lips(&lips).unwrap();
        frames.frames -= 1;
        frames.pixels.truncate(frames.frames * 64 * 64);
        write_lips(&lips, &frames).unwrap();
        assert!(load_dataset(dir.path().join("manifest.tsv")).is_err());
    }
}
