use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

pub const LIP_SIZE: usize = 64;
const FOREGROUND: f32 = 0.9;
const BACKGROUND: f32 = 0.1;
const PIXEL_NOISE: f32 = 0.02;

/// Grayscale mouth-region frames, row-major `[T × 64 × 64]`, 8-bit
/// quantized; pixel intensity in `[0, 1]` is `value / 255`.
#[derive(Clone, Debug, PartialEq)]
pub struct LipFrames {
    pub frames: usize,
    pub pixels: Vec<u8>,
}

pub fn quantize_pixel(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn pixel_intensity(p: u8) -> f32 {
    p as f32 / 255.0
}

impl LipFrames {
    pub fn frame(&self, t: usize) -> &[u8] {
        let n = LIP_SIZE * LIP_SIZE;
        &self.pixels[t * n..(t + 1) * n]
    }

    pub fn mean_intensity(&self, t: usize) -> f64 {
        let f = self.frame(t);
        f.iter().map(|&v| pixel_intensity(v) as f64).sum::<f64>() / f.len() as f64
    }
}

/// Vertical semi-axis in pixels for an envelope value.
pub fn mouth_height(envelope: f64) -> f64 {
    4.0 + 20.0 * envelope
}

/// Noise-free ellipse with a one-pixel soft edge.
pub fn render_mouth(envelope: f64, centre: (f64, f64), half_width: f64) -> Vec<f32> {
    let b = mouth_height(envelope);
    let a = half_width;
    let mut img = vec![BACKGROUND; LIP_SIZE * LIP_SIZE];
    for y in 0..LIP_SIZE {
        for x in 0..LIP_SIZE {
            let dx = (x as f64 + 0.5 - centre.0) / a;
            let dy = (y as f64 + 0.5 - centre.1) / b;
            let r = (dx * dx + dy * dy).sqrt();
            // Signed distance in pixels along the minor axis scale.
            let d = (1.0 - r) * a.min(b);
            let cover = (d + 0.5).clamp(0.0, 1.0) as f32;
            img[y * LIP_SIZE + x] = BACKGROUND + (FOREGROUND - BACKGROUND) * cover;
        }
    }
    img
}

/// One 64×64 frame per envelope value: a mouth ellipse whose height tracks
/// the envelope, with small per-frame position and width jitter and additive
/// pixel noise.
pub fn synth_lips(envelope: &[f64], rng: &mut impl Rng) -> Result<LipFrames> {
    if let Some(e) = envelope.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::invalid(format!("envelope value {e} outside [0, 1]")));
    }
    let noise = Normal::new(0.0f32, PIXEL_NOISE).expect("valid sigma");
    let mut pixels = Vec::with_capacity(envelope.len() * LIP_SIZE * LIP_SIZE);
    let mid = LIP_SIZE as f64 / 2.0;
    for &e in envelope {
        let centre = (mid + rng.random_range(-1.5..1.5), mid + rng.random_range(-1.5..1.5));
        let half_width = 22.0 + rng.random_range(-1.0..1.0);
        for v in render_mouth(e, centre, half_width) {
            pixels.push(quantize_pixel(v + noise.sample(rng)));
        }
    }
    Ok(LipFrames {
        frames: envelope.len(),
        pixels,
    })
}
