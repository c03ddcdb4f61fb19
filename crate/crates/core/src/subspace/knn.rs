use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::check_len;
use crate::error::{Error, Result};

use super::{sq_dist, weighted_dist, AtfBank, DiagonalUncertainty, TrainingSet};

/// Distance used to rank training samples against the current estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Squared Euclidean distance of time-domain AIR vectors.
    Euclidean,
    /// Uncertainty-weighted distance of DFT-domain ATF vectors.
    Kf,
}

/// Indices of the `k` training vectors closest to `query`, nearest first.
pub fn knn_select(query: &[f64], set: &TrainingSet, k: usize) -> Result<Vec<usize>> {
    check_len(query.len(), set.air_len())?;
    let dists: Vec<f64> = set.iter().map(|v| sq_dist(query, v)).collect();
    smallest(&dists, k)
}

/// Indices of the `k` ATFs in `bank` with the smallest weighted distance to
/// `mean`, nearest first.
pub fn knn_select_kf(mean: &[Complex64], p_diag: &DiagonalUncertainty, bank: &AtfBank, k: usize) -> Result<Vec<usize>> {
    if bank.is_empty() {
        return Err(Error::invalid("empty ATF bank"));
    }
    check_len(mean.len(), bank.atf(0).len())?;
    check_len(p_diag.len(), mean.len())?;
    let inv = p_diag.inverse_weights();
    let dists: Vec<f64> = (0..bank.len()).map(|j| weighted_dist(bank.atf(j), mean, &inv)).collect();
    smallest(&dists, k)
}

/// Positions of the `k` smallest values; ties resolve to the lower index.
pub(crate) fn smallest(dists: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > dists.len() {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={}", dists.len())));
    }
    let cmp = |a: &usize, b: &usize| dists[*a].total_cmp(&dists[*b]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..dists.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corpus(seed: u64, n: usize, q: usize) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n).map(|_| (0..q).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        TrainingSet::new(1, q, 8000.0, seed, v).unwrap()
    }

    #[test]
    fn full_k_returns_every_index() {
        let set = corpus(1, 12, 5);
        let mut all = knn_select(&[0.0; 5], &set, 12).unwrap();
        all.sort();
        assert_eq!(all, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn member_query_finds_itself() {
        let set = corpus(2, 30, 6);
        assert_eq!(knn_select(set.vector(17), &set, 1).unwrap(), vec![17]);
    }

    #[test]
    fn matches_full_sort_oracle() {
        let set = corpus(3, 100, 8);
        let q: Vec<f64> = vec![0.1; 8];
        let mut oracle: Vec<(f64, usize)> = set
            .iter()
            .enumerate()
            .map(|(i, v)| (v.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum(), i))
            .collect();
        oracle.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let want: Vec<usize> = oracle.iter().take(5).map(|p| p.1).collect();
        assert_eq!(knn_select(&q, &set, 5).unwrap(), want);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        assert_eq!(smallest(&[2.0, 1.0, 1.0, 0.5, 1.0], 3).unwrap(), vec![3, 1, 2]);
        assert_eq!(smallest(&[1.0; 6], 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn rejects_bad_k() {
        let set = corpus(4, 5, 3);
        assert!(knn_select(&[0.0; 3], &set, 6).is_err());
        assert!(knn_select(&[0.0; 3], &set, 0).is_err());
        assert!(knn_select(&[0.0; 2], &set, 1).is_err());
    }
}
