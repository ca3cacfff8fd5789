//! Synthetic audio-visual corpus: speech-like recordings, lip-aperture video,
//! three noise families, SNR-controlled corruption and on-disk manifests.

mod corpus;
mod lips;
mod manifest;
mod noise;
mod speech;

pub use corpus::{build_corpus, load_dataset, load_records, Dataset, Utterance};
pub use lips::{mouth_height, pixel_intensity, quantize_pixel, render_mouth, synth_lips, LipFrames, LIP_SIZE};
pub use manifest::{
    decode_lips, encode_lips, read_lips, write_lips, CorpusSpec, DatasetManifest, ManifestRecord, Split,
    TEST_SNRS, TRAIN_SNR_RANGE,
};
pub use noise::{synth_alarm, synth_crowd, synth_noise, synth_traffic, AlarmPattern, NoiseKind};
pub use speech::{synth_speech, PAUSE_LEVEL};
