//! Enhancement, objective metrics, result tables and spectrogram images.

mod enhance;
mod evaluate;
mod metrics;
mod spectrogram;

pub use enhance::{enhance, Enhanced, Enhancer};
pub use evaluate::{
    aggregate, evaluate, evaluate_utterances, Aggregate, EvalResult, UtteranceScore, AGGREGATES_HEADER,
    SCORES_HEADER,
};
pub use metrics::{metric_lsd, metric_mse, metric_segsnr, SEGMENT_LEN, SEGSNR_MAX_DB, SEGSNR_MIN_DB, SILENCE_POWER};
pub use spectrogram::{decode_pgm, encode_pgm, export_spectrogram, spectrogram_image, GrayImage, DB_RANGE};
