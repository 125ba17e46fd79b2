//! Seeded k-fold partition of sample indices.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitTask {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` and cuts it into `k` contiguous folds whose sizes differ
/// by at most one; task `i` tests fold `i` and trains on the rest.
pub fn split_protocol(n: usize, k: usize, seed: u64) -> Result<Vec<SplitTask>> {
    if k < 2 {
        return Err(Error::Validation(format!("split count {k} must be at least 2")));
    }
    if k > n {
        return Err(Error::InsufficientData(format!("{n} samples cannot fill {k} splits")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let bounds: Vec<usize> = (0..=k).map(|i| i * n / k).collect();
    Ok((0..k)
        .map(|i| {
            let test = order[bounds[i]..bounds[i + 1]].to_vec();
            let train = order[..bounds[i]]
                .iter()
                .chain(&order[bounds[i + 1]..])
                .copied()
                .collect();
            SplitTask { train, test }
        })
        .collect())
}

/// Splits `indices` into `(fit, validation)` with `round(fraction · len)`
/// validation items, keeping at least one for fitting.
pub fn holdout(indices: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order = indices.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held = ((fraction * order.len() as f64).round() as usize).min(order.len().saturating_sub(1));
    let validation = order.split_off(order.len() - held);
    (order, validation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_samples_ten_splits_is_leave_one_out() {
        let tasks = split_protocol(10, 10, 3).unwrap();
        assert!(tasks.iter().all(|t| t.test.len() == 1 && t.train.len() == 9));
    }

    #[test]
    fn folds_partition_the_data() {
        let tasks = split_protocol(37, 10, 1).unwrap();
        let mut seen: Vec<usize> = tasks.iter().flat_map(|t| t.test.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..37).collect::<Vec<_>>());
        for t in &tasks {
            assert_eq!(t.train.len() + t.test.len(), 37);
            assert!(t.test.iter().all(|i| !t.train.contains(i)));
        }
    }

    #[test]
    fn same_seed_same_splits() {
        assert_eq!(split_protocol(50, 10, 9).unwrap(), split_protocol(50, 10, 9).unwrap());
        assert_ne!(split_protocol(50, 10, 9).unwrap(), split_protocol(50, 10, 10).unwrap());
    }

    #[test]
    fn bad_counts() {
        assert!(matches!(split_protocol(5, 1, 0), Err(Error::Validation(_))));
        assert!(matches!(split_protocol(5, 6, 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn holdout_keeps_a_fit_set() {
        let (fit, val) = holdout(&[4, 5, 6, 7, 8, 9, 10, 11, 12, 13], 0.1, 0);
        assert_eq!((fit.len(), val.len()), (9, 1));
        let (fit, val) = holdout(&[1], 0.5, 0);
        assert_eq!((fit.len(), val.len()), (1, 0));
    }
}
