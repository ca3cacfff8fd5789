/// Appends first and second temporal differences to each frame:
/// `[T × D]` → `[T × 3D]` laid out as `[static | Δ | ΔΔ]`.
///
/// `Δ_t = (x_{t+1} − x_{t−1}) / 2` with the first and last frames
/// replicated at the edges; `ΔΔ` applies the same operator to `Δ`.
pub fn delta_features(frames: &[f64], dim: usize) -> Vec<f64> {
    assert!(dim > 0 && frames.len() % dim == 0, "frames must be a whole number of rows");
    let t = frames.len() / dim;
    let d1 = delta(frames, dim);
    let d2 = delta(&d1, dim);
    let mut out = Vec::with_capacity(t * 3 * dim);
    for k in 0..t {
        let row = k * dim..(k + 1) * dim;
        out.extend_from_slice(&frames[row.clone()]);
        out.extend_from_slice(&d1[row.clone()]);
        out.extend_from_slice(&d2[row]);
    }
    out
}

fn delta(x: &[f64], dim: usize) -> Vec<f64> {
    let t = x.len() / dim;
    let mut out = vec![0.0; x.len()];
    for k in 0..t {
        let prev = k.saturating_sub(1);
        let next = (k + 1).min(t - 1);
        for j in 0..dim {
            out[k * dim + j] = (x[next * dim + j] - x[prev * dim + j]) / 2.0;
        }
    }
    out
}
