use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Consecutive non-overlapping frame ranges of at most `steps` frames; the
/// last range may be shorter.
pub fn make_chunks(frames: usize, steps: usize) -> Vec<Range<usize>> {
    let steps = steps.max(1);
    (0..frames).step_by(steps).map(|s| s..(s + steps).min(frames)).collect()
}

/// Utterance-level split into `(train, validation)` index lists, each sorted.
pub fn split_train_val(count: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if count < 10 {
        return Err(Error::invalid(format!("need at least 10 utterances to split, got {count}")));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid(format!("val_fraction must lie in (0, 1), got {val_fraction}")));
    }
    let n_val = ((count as f64 * val_fraction).round() as usize).clamp(1, count - 1);
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EarlyStop {
    Continue,
    Stop,
}

/// Stops once none of the last `patience` epochs lowered the running best
/// validation error by at least `min_rel` (relative). The first epoch always
/// counts as an improvement.
pub fn early_stop_check(history: &[f64], patience: usize, min_rel: f64) -> EarlyStop {
    if history.len() <= patience {
        return EarlyStop::Continue;
    }
    let mut best = f64::INFINITY;
    let mut last_improvement = 0;
    for (i, &v) in history.iter().enumerate() {
        if i == 0 || v <= best * (1.0 - min_rel) {
            last_improvement = i;
        }
        best = best.min(v);
    }
    if history.len() - 1 - last_improvement >= patience {
        EarlyStop::Stop
    } else {
        EarlyStop::Continue
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chunk_lengths() {
        let lens = |t| make_chunks(t, 21).iter().map(|r| r.len()).collect::<Vec<_>>();
        assert_eq!(lens(50), vec![21, 21, 8]);
        assert_eq!(lens(21), vec![21]);
        assert_eq!(lens(5), vec![5]);
        assert!(make_chunks(0, 21).is_empty());
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let (train, val) = split_train_val(100, 0.1, 3).unwrap();
        assert_eq!((train.len(), val.len()), (90, 10));
        assert!(train.iter().all(|i| !val.contains(i)));
        assert_eq!(split_train_val(100, 0.1, 3).unwrap(), (train.clone(), val.clone()));
        assert_ne!(split_train_val(100, 0.1, 4).unwrap().1, val);
        assert!(split_train_val(9, 0.1, 0).is_err());
    }

    fn decision_at(history: &[f64]) -> EarlyStop {
        early_stop_check(history, 5, 0.01)
    }

    #[test]
    fn plateau_after_sub_percent_gains_stops() {
        let h = [1.0, 0.90, 0.895, 0.894, 0.893, 0.8925, 0.8921];
        for k in 1..h.len() {
            assert_eq!(decision_at(&h[..k]), EarlyStop::Continue, "epoch {k}");
        }
        assert_eq!(decision_at(&h), EarlyStop::Stop);
    }

    #[test]
    fn one_percent_gain_resets_patience() {
        // 0.90 → 0.89 is a 1.11 % gain, so epoch 3 is the last improvement.
        let h = [1.0, 0.90, 0.89, 0.889, 0.888, 0.8875, 0.8871];
        assert_eq!(decision_at(&h), EarlyStop::Continue);
        let mut longer = h.to_vec();
        longer.push(0.8870);
        assert_eq!(decision_at(&longer), EarlyStop::Stop);
    }

    #[test]
    fn short_history_continues() {
        assert_eq!(decision_at(&[1.0, 1.0, 1.0, 1.0, 1.0]), EarlyStop::Continue);
        assert_eq!(decision_at(&[1.0]), EarlyStop::Continue);
        assert_eq!(decision_at(&[1.0; 6]), EarlyStop::Stop);
    }

    #[test]
    fn steady_two_percent_decrease_never_stops() {
        let h: Vec<f64> = (0..100).map(|i| 0.98f64.powi(i)).collect();
        for k in 1..=h.len() {
            assert_eq!(decision_at(&h[..k]), EarlyStop::Continue);
        }
    }

    proptest! {
        #[test]
        fn chunking_conserves_frames(t in 0usize..2000, steps in 1usize..64) {
            let chunks = make_chunks(t, steps);
            prop_assert_eq!(chunks.iter().map(|r| r.len()).sum::<usize>(), t);
            for w in chunks.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
            }
            prop_assert!(chunks.iter().all(|r| !r.is_empty() && r.len() <= steps));
        }

        #[test]
        fn stop_decision_matches_brute_force(h in prop::collection::vec(0.1f64..2.0, 1..30)) {
            // Oracle: epoch i improves iff h[i] <= 0.99 · min(h[..i]).
            let improving: Vec<bool> = (0..h.len())
                .map(|i| i == 0 || h[i] <= 0.99 * h[..i].iter().cloned().fold(f64::INFINITY, f64::min))
                .collect();
            let n = h.len();
            let expected = if n > 5 && !improving[n - 5..].iter().any(|&b| b) {
                EarlyStop::Stop
            } else {
                EarlyStop::Continue
            };
            prop_assert_eq!(decision_at(&h), expected);
        }
    }
}
