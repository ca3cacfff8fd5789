//! RIFF/WAVE PCM, 16-bit signed little-endian, mono, 16 kHz.

use std::fs;
use std::path::Path;

use super::{AudioSignal, SAMPLE_RATE};
use crate::{Error, Result};

fn quantize(v: f32) -> i16 {
    (v.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

pub fn encode_wav(signal: &AudioSignal) -> Vec<u8> {
    let data_len = (signal.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&signal.sample_rate.to_le_bytes());
    out.extend_from_slice(&(signal.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &signal.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    out
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn decode_wav(bytes: &[u8], context: &str) -> Result<AudioSignal> {
    let bad = |m: &str| Error::format(context, m);
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file"));
    }
    let mut pos = 12;
    let mut format = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        if body + len > bytes.len() {
            return Err(bad("truncated chunk"));
        }
        match id {
            b"fmt " => {
                if len < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                format = Some((
                    u16_at(bytes, body),
                    u16_at(bytes, body + 2),
                    u32_at(bytes, body + 4),
                    u16_at(bytes, body + 14),
                ));
            }
            b"data" => {
                let (tag, channels, rate, bits) = format.ok_or_else(|| bad("data chunk before fmt chunk"))?;
                if tag != 1 {
                    return Err(bad(&format!("unsupported encoding tag {tag}, expected PCM (1)")));
                }
                if channels != 1 {
                    return Err(bad(&format!("expected mono, found {channels} channels")));
                }
                if bits != 16 {
                    return Err(bad(&format!("expected 16-bit samples, found {bits}-bit")));
                }
                if rate != SAMPLE_RATE {
                    return Err(bad(&format!("expected {SAMPLE_RATE} Hz, found {rate} Hz")));
                }
                let samples = bytes[body..body + len]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32767.0)
                    .collect();
                return Ok(AudioSignal::new(samples));
            }
            _ => {}
        }
        pos = body + len + (len & 1);
    }
    Err(bad("no data chunk"))
}

pub fn write_wav(path: impl AsRef<Path>, signal: &AudioSignal) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(signal)).map_err(|e| Error::io(path, e))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes, &path.display().to_string())
}

/// Rounds a signal through the 16-bit representation.
pub fn quantized(signal: &AudioSignal) -> AudioSignal {
    AudioSignal {
        samples: signal.samples.iter().map(|&v| quantize(v) as f32 / 32767.0).collect(),
        sample_rate: signal.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_matches_quantization() {
        let sig = AudioSignal::new(vec![0.0, 0.5, -0.5, 1.0, -1.0, 0.123]);
        let back = decode_wav(&encode_wav(&sig), "mem").unwrap();
        assert_eq!(back, quantized(&sig));
        assert_eq!(encode_wav(&sig).len(), 44 + 12);
    }

    #[test]
    fn rejects_other_formats() {
        let mut bytes = encode_wav(&AudioSignal::new(vec![0.1; 4]));
        bytes[24..28].copy_from_slice(&44100u32.to_le_bytes());
        let err = decode_wav(&bytes, "x.wav").unwrap_err().to_string();
        assert!(err.contains("44100"), "{err}");

        let mut stereo = encode_wav(&AudioSignal::new(vec![0.1; 4]));
        stereo[22] = 2;
        assert!(decode_wav(&stereo, "x.wav").is_err());

        assert!(decode_wav(b"RIFX0000WAVE", "x.wav").is_err());
    }
}
