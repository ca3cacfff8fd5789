use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::lips::{LipFrames, LIP_SIZE};
use super::NoiseKind;
use crate::{Error, Result};

pub const MANIFEST_MAGIC: &str = "avse-manifest";
pub const MANIFEST_VERSION: u32 = 1;
const COLUMNS: &str = "id\tsplit\tclean_path\tcorrupted_path\tlips_path\tnoise_kind\tsnr_db";

/// Integral training SNRs are drawn from this inclusive range.
pub const TRAIN_SNR_RANGE: (i32, i32) = (-5, 5);
pub const TEST_SNRS: [i32; 6] = [-6, -3, 0, 3, 6, 9];

/// Size and randomness of a synthetic corpus. Parsed from `key = value` text.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    /// Clean training recordings; each is corrupted once per seen noise kind.
    pub n_train: usize,
    /// Clean test recordings; each is corrupted by every kind at every test SNR.
    pub n_test: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Length of the noise recording each corruption draws a random excerpt from.
    pub noise_clip_s: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_test: 30,
            min_duration_s: 2.0,
            max_duration_s: 6.0,
            noise_clip_s: 20.0,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::invalid("corpus needs at least one train and one test recording"));
        }
        if !(self.min_duration_s >= 0.5 && self.max_duration_s >= self.min_duration_s && self.max_duration_s.is_finite()) {
            return Err(Error::invalid("durations must satisfy 0.5 <= min_duration_s <= max_duration_s"));
        }
        if !(self.noise_clip_s >= 0.5 && self.noise_clip_s.is_finite()) {
            return Err(Error::invalid("noise_clip_s must be at least 0.5"));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::format("corpus spec", format!("bad value {value:?} for {key}"));
        match key {
            "n_train" => self.n_train = value.parse().map_err(|_| bad())?,
            "n_test" => self.n_test = value.parse().map_err(|_| bad())?,
            "min_duration_s" => self.min_duration_s = value.parse().map_err(|_| bad())?,
            "max_duration_s" => self.max_duration_s = value.parse().map_err(|_| bad())?,
            "noise_clip_s" => self.noise_clip_s = value.parse().map_err(|_| bad())?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            other => return Err(Error::format("corpus spec", format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format("corpus spec", format!("line {}: expected key = value", i + 1)))?;
            spec.set(k.trim(), v.trim())?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv(&self) -> String {
        format!(
            "n_train={} n_test={} min_duration_s={} max_duration_s={} noise_clip_s={} seed={}",
            self.n_train, self.n_test, self.min_duration_s, self.max_duration_s, self.noise_clip_s, self.seed
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub id: String,
    pub split: Split,
    /// Paths are relative to the manifest's directory.
    pub clean_path: PathBuf,
    pub corrupted_path: PathBuf,
    pub lips_path: PathBuf,
    pub noise_kind: NoiseKind,
    pub snr_db: f64,
}

impl ManifestRecord {
    /// Identifier of the clean recording this record was derived from.
    pub fn source_id(&self) -> &str {
        self.id.split('_').next().unwrap_or(&self.id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub spec: Option<CorpusSpec>,
    /// Directory the record paths are relative to.
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    pub fn split(&self, split: Split) -> DatasetManifest {
        DatasetManifest {
            spec: self.spec.clone(),
            root: self.root.clone(),
            records: self.records.iter().filter(|r| r.split == split).cloned().collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MANIFEST_MAGIC}\tv{MANIFEST_VERSION}\n");
        if let Some(spec) = &self.spec {
            let _ = writeln!(s, "# spec\t{}", spec.to_kv());
        }
        s.push_str(COLUMNS);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.id,
                r.split.name(),
                r.clean_path.display(),
                r.corrupted_path.display(),
                r.lips_path.display(),
                r.noise_kind,
                r.snr_db
            );
        }
        s
    }

    pub fn parse(text: &str, root: PathBuf) -> Result<Self> {
        let bad = |line: usize, m: String| Error::format("manifest", format!("line {line}: {m}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == format!("{MANIFEST_MAGIC}\tv{MANIFEST_VERSION}") => {}
            Some((_, l)) if l.starts_with(MANIFEST_MAGIC) => {
                return Err(bad(1, format!("unsupported version header {l:?}")));
            }
            _ => return Err(bad(1, "missing manifest header".into())),
        }
        let mut spec = None;
        let mut records = Vec::new();
        for (n, line) in lines {
            if line.is_empty() || line == COLUMNS {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# spec\t") {
                let mut s = CorpusSpec::default();
                for kv in rest.split_whitespace() {
                    let (k, v) = kv.split_once('=').ok_or_else(|| bad(n, format!("bad spec entry {kv:?}")))?;
                    s.set(k, v)?;
                }
                spec = Some(s);
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 {
                return Err(bad(n, format!("expected 7 tab-separated fields, found {}", f.len())));
            }
            let split = match f[1] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(bad(n, format!("unknown split {other:?}"))),
            };
            let noise_kind: NoiseKind = f[5].parse().map_err(|e: Error| bad(n, e.to_string()))?;
            let snr_db: f64 = f[6].parse().map_err(|_| bad(n, format!("bad SNR {:?}", f[6])))?;
            records.push(ManifestRecord {
                id: f[0].to_string(),
                split,
                clean_path: f[2].into(),
                corrupted_path: f[3].into(),
                lips_path: f[4].into(),
                noise_kind,
                snr_db,
            });
        }
        let manifest = Self { spec, root, records };
        manifest.check_hygiene()?;
        Ok(manifest)
    }

    /// Unique ids, unseen noise only in test, no recording in both splits.
    pub fn check_hygiene(&self) -> Result<()> {
        let mut ids = std::collections::HashSet::new();
        let mut sources = std::collections::HashMap::new();
        for r in &self.records {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::format("manifest", format!("duplicate id {}", r.id)));
            }
            if r.split == Split::Train && !r.noise_kind.is_seen() {
                return Err(Error::format("manifest", format!("{}: {} noise in the train split", r.id, r.noise_kind)));
            }
            if *sources.entry(r.source_id()).or_insert(r.split) != r.split {
                return Err(Error::format(
                    "manifest",
                    format!("recording {} appears in both splits", r.source_id()),
                ));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }
}

/// Lip file: three little-endian `u32` (T, 64, 64) then `T·64·64` bytes.
pub fn encode_lips(lips: &LipFrames) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + lips.pixels.len());
    for v in [lips.frames, LIP_SIZE, LIP_SIZE] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&lips.pixels);
    out
}

pub fn decode_lips(bytes: &[u8], context: &str) -> Result<LipFrames> {
    if bytes.len() < 12 {
        return Err(Error::format(context, "lip file shorter than its header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize;
    let (t, h, w) = (word(0), word(1), word(2));
    if h != LIP_SIZE || w != LIP_SIZE {
        return Err(Error::format(context, format!("lip frames are {h}×{w}, expected {LIP_SIZE}×{LIP_SIZE}")));
    }
    if bytes.len() - 12 != t * h * w {
        return Err(Error::format(
            context,
            format!("header promises {t} frames but the payload holds {} bytes", bytes.len() - 12),
        ));
    }
    Ok(LipFrames {
        frames: t,
        pixels: bytes[12..].to_vec(),
    })
}

pub fn write_lips(path: impl AsRef<Path>, lips: &LipFrames) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_lips(lips)).map_err(|e| Error::io(path, e))
}

pub fn read_lips(path: impl AsRef<Path>) -> Result<LipFrames> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_lips(&bytes, &path.display().to_string())
}
