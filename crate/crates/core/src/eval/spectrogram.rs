use std::path::Path;

use crate::{Error, Result};

/// Dynamic range mapped onto the gray scale, in dB below the maximum.
pub const DB_RANGE: f64 = 80.0;

/// 8-bit grayscale image, row-major, top row first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Maps natural-log power `[T × bins]` to an image with time on x and
/// frequency rising upwards; 0 dB (the maximum) is white, −80 dB black.
pub fn spectrogram_image(log_power: &[f64], bins: usize) -> Result<GrayImage> {
    if bins == 0 || log_power.len() % bins != 0 || log_power.is_empty() {
        return Err(Error::invalid("spectrogram needs whole non-empty frames"));
    }
    if log_power.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectrogram input"));
    }
    let frames = log_power.len() / bins;
    let to_db = 10.0 / std::f64::consts::LN_10;
    let max = log_power.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pixels = vec![0u8; frames * bins];
    for t in 0..frames {
        for k in 0..bins {
            let db = (log_power[t * bins + k] - max) * to_db;
            let level = ((db + DB_RANGE) / DB_RANGE).clamp(0.0, 1.0);
            pixels[(bins - 1 - k) * frames + t] = (level * 255.0).round() as u8;
        }
    }
    Ok(GrayImage {
        width: frames,
        height: bins,
        pixels,
    })
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let bad = |m: &str| Error::format("PGM", m);
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("only 8-bit PGM is supported"));
    }
    let pixels = bytes.get(pos + 1..).ok_or_else(|| bad("missing pixel data"))?;
    if pixels.len() != width * height {
        return Err(bad("pixel data does not match the header size"));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: pixels.to_vec(),
    })
}

pub fn export_spectrogram(log_power: &[f64], bins: usize, path: impl AsRef<Path>) -> Result<GrayImage> {
    let img = spectrogram_image(log_power, bins)?;
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(&img)).map_err(|e| Error::io(path, e))?;
    Ok(img)
}
