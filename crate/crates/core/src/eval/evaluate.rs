use std::fmt::Write as _;
use std::path::Path;

use super::{metric_lsd, metric_mse, metric_segsnr, Enhancer};
use crate::data::{load_records, DatasetManifest, NoiseKind, Split, Utterance};
use crate::dsp::{stft, N_BINS};
use crate::models::Checkpoint;
use crate::pipeline::LipCache;
use crate::{Error, Result};

pub const SCORES_HEADER: &str = "id,noise_kind,snr_db,mse_logspec,lsd_db,segsnr_in_db,segsnr_out_db";
pub const AGGREGATES_HEADER: &str = "noise_kind,snr_db,count,mse_logspec,lsd_db,segsnr_in_db,segsnr_out_db";

#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceScore {
    pub id: String,
    pub noise_kind: NoiseKind,
    pub snr_db: f64,
    pub mse_logspec: f64,
    pub lsd_db: f64,
    pub segsnr_in_db: f64,
    pub segsnr_out_db: f64,
}

impl UtteranceScore {
    pub fn segsnr_gain_db(&self) -> f64 {
        self.segsnr_out_db - self.segsnr_in_db
    }
}

/// Arithmetic mean over a group of utterances. `snr_db == None` pools all SNRs.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub noise_kind: NoiseKind,
    pub snr_db: Option<f64>,
    pub count: usize,
    pub mse_logspec: f64,
    pub lsd_db: f64,
    pub segsnr_in_db: f64,
    pub segsnr_out_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    /// In manifest order.
    pub scores: Vec<UtteranceScore>,
    /// Per (noise, SNR) cells first, then one pooled row per noise.
    pub aggregates: Vec<Aggregate>,
}

fn mean_of(scores: &[&UtteranceScore], noise_kind: NoiseKind, snr_db: Option<f64>) -> Aggregate {
    let n = scores.len() as f64;
    let avg = |f: fn(&UtteranceScore) -> f64| scores.iter().map(|s| f(s)).sum::<f64>() / n;
    Aggregate {
        noise_kind,
        snr_db,
        count: scores.len(),
        mse_logspec: avg(|s| s.mse_logspec),
        lsd_db: avg(|s| s.lsd_db),
        segsnr_in_db: avg(|s| s.segsnr_in_db),
        segsnr_out_db: avg(|s| s.segsnr_out_db),
    }
}

/// Cells ordered by noise kind then SNR, followed by per-noise rows.
pub fn aggregate(scores: &[UtteranceScore]) -> Vec<Aggregate> {
    let mut cells = Vec::new();
    let mut pooled = Vec::new();
    for kind in NoiseKind::ALL {
        let of_kind: Vec<&UtteranceScore> = scores.iter().filter(|s| s.noise_kind == kind).collect();
        if of_kind.is_empty() {
            continue;
        }
        let mut snrs: Vec<f64> = of_kind.iter().map(|s| s.snr_db).collect();
        snrs.sort_by(f64::total_cmp);
        snrs.dedup();
        for snr in snrs {
            let members: Vec<&UtteranceScore> = of_kind.iter().copied().filter(|s| s.snr_db == snr).collect();
            cells.push(mean_of(&members, kind, Some(snr)));
        }
        pooled.push(mean_of(&of_kind, kind, None));
    }
    cells.extend(pooled);
    cells
}

impl EvalResult {
    pub fn from_scores(scores: Vec<UtteranceScore>) -> Self {
        let aggregates = aggregate(&scores);
        Self { scores, aggregates }
    }

    pub fn cell(&self, kind: NoiseKind, snr_db: Option<f64>) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.noise_kind == kind && a.snr_db == snr_db)
    }

    pub fn mean_mse(&self) -> f64 {
        self.scores.iter().map(|s| s.mse_logspec).sum::<f64>() / self.scores.len().max(1) as f64
    }

    pub fn scores_csv(&self) -> String {
        let mut out = format!("{SCORES_HEADER}\n");
        for s in &self.scores {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.id,
                s.noise_kind.name(),
                s.snr_db,
                s.mse_logspec,
                s.lsd_db,
                s.segsnr_in_db,
                s.segsnr_out_db
            );
        }
        out
    }

    pub fn aggregates_csv(&self) -> String {
        let mut out = format!("{AGGREGATES_HEADER}\n");
        for a in &self.aggregates {
            let snr = a.snr_db.map_or("all".to_string(), |v| v.to_string());
            let _ = writeln!(
                out,
                "{},{snr},{},{},{},{},{}",
                a.noise_kind.name(),
                a.count,
                a.mse_logspec,
                a.lsd_db,
                a.segsnr_in_db,
                a.segsnr_out_db
            );
        }
        out
    }

    /// Writes `scores.csv` and `aggregates.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [("scores.csv", self.scores_csv()), ("aggregates.csv", self.aggregates_csv())] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Scores every utterance; all must come from the test split.
pub fn evaluate_utterances(checkpoint: &Checkpoint, utts: &[Utterance]) -> Result<EvalResult> {
    if utts.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if let Some(u) = utts.iter().find(|u| u.record.split != Split::Test) {
        return Err(Error::invalid(format!("{} is not a test-split record", u.record.id)));
    }
    let mut enhancer = Enhancer::new(checkpoint);
    let with_images = checkpoint.model.config().kind.uses_images();
    let mut lips = LipCache::default();
    let mut scores = Vec::with_capacity(utts.len());
    for u in utts {
        let noisy = stft(&u.corrupted)?;
        let clean = stft(&u.clean)?;
        let images = with_images.then(|| lips.get(&u.lips));
        let pred = enhancer.predict_spectrum(&u.record.id, &noisy, images)?;
        let target = enhancer.features().targets(&clean);
        let mse_logspec = metric_mse(&pred, &target)?;
        let enhanced = enhancer.synthesize(&noisy, pred)?;
        scores.push(UtteranceScore {
            id: u.record.id.clone(),
            noise_kind: u.record.noise_kind,
            snr_db: u.record.snr_db,
            mse_logspec,
            lsd_db: metric_lsd(&enhanced.log_power, &clean.log_power, N_BINS)?,
            segsnr_in_db: metric_segsnr(&u.corrupted.samples, &u.clean.samples)?,
            segsnr_out_db: metric_segsnr(&enhanced.signal.samples, &u.clean.samples)?,
        });
    }
    Ok(EvalResult::from_scores(scores))
}

/// Loads the manifest's records and scores them.
pub fn evaluate(checkpoint: &Checkpoint, manifest: &DatasetManifest) -> Result<EvalResult> {
    if manifest.records.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if let Some(r) = manifest.records.iter().find(|r| r.split != Split::Test) {
        return Err(Error::invalid(format!("{} is not a test-split record", r.id)));
    }
    evaluate_utterances(checkpoint, &load_records(manifest)?)
}
