//! Affine-subspace models of the AIR manifold.
//!
//! A model maps an arbitrary MISO AIR vector onto a low-dimensional affine
//! subspace fitted to training AIRs. Three flavours are available: a single
//! global PCA subspace, a k-means mixture of local PCA subspaces, and an
//! adaptive subspace spanned by the nearest training neighbours of a query.

mod affine;
mod kmeans;
mod knn;
mod mixture;
mod pca;
mod training_set;

use num_complex::Complex64;

use crate::dsp::check_len;
use crate::error::{Error, Result};

pub use affine::{build_knn_subspace, AffineSubspace, RANK_TOLERANCE};
pub use kmeans::{kmeans, KMeans, MAX_ITERATIONS};
pub use knn::{knn_select, knn_select_kf, Metric};
pub use mixture::MixtureModel;
pub use pca::{fit_basis_pca, fit_pca_subspace, PcaBasis};
pub use training_set::{AtfBank, TrainingSet};

/// Floor applied to uncertainty entries before they are inverted.
pub const UNCERTAINTY_FLOOR: f64 = 1e-12;

/// Elementwise mean of the members.
pub fn fit_offset(members: &[&[f64]]) -> Result<Vec<f64>> {
    let first = members.first().ok_or_else(|| Error::invalid("cannot average an empty set"))?;
    let mut acc = vec![0.0; first.len()];
    for m in members {
        check_len(m.len(), acc.len())?;
        for (a, v) in acc.iter_mut().zip(m.iter()) {
            *a += v;
        }
    }
    let n = members.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// `‖a - b‖²`.
pub fn distance_euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(b.len(), a.len())?;
    Ok(sq_dist(a, b))
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Diagonal of the per-channel DFT-domain state uncertainty, `B` blocks of
/// `M` entries stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalUncertainty {
    values: Vec<f64>,
}

impl DiagonalUncertainty {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("uncertainty entries must be finite and non-negative"));
        }
        Ok(Self { values })
    }

    pub fn uniform(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Reciprocals after flooring at [`UNCERTAINTY_FLOOR`].
    pub fn inverse_weights(&self) -> Vec<f64> {
        self.values.iter().map(|p| 1.0 / p.max(UNCERTAINTY_FLOOR)).collect()
    }
}

/// Uncertainty-weighted squared distance `Σ |c - m|² / max(p, floor)`.
pub fn distance_kf(candidate: &[Complex64], mean: &[Complex64], p_diag: &DiagonalUncertainty) -> Result<f64> {
    check_len(mean.len(), candidate.len())?;
    check_len(p_diag.len(), candidate.len())?;
    Ok(weighted_dist(candidate, mean, &p_diag.inverse_weights()))
}

pub(crate) fn weighted_dist(candidate: &[Complex64], mean: &[Complex64], inv_p: &[f64]) -> f64 {
    candidate.iter().zip(mean).zip(inv_p).map(|((c, m), w)| (c - m).norm_sqr() * w).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{BlockDft, FrameConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randv(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn offset_examples() {
        let v = vec![1.0, -2.0, 3.5];
        assert_eq!(fit_offset(&[&v]).unwrap(), v);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_eq!(fit_offset(&[&v, &neg]).unwrap(), vec![0.0; 3]);
        assert!(fit_offset(&[]).is_err());
        assert!(fit_offset(&[&v, &[1.0]]).is_err());
    }

    #[test]
    fn offset_matches_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec<f64>> = (0..100).map(|_| randv(&mut rng, 16)).collect();
        let rows: Vec<&[f64]> = pts.iter().map(|v| v.as_slice()).collect();
        let off = fit_offset(&rows).unwrap();
        for i in 0..16 {
            let mut s = 0.0;
            for p in &pts {
                s += p[i];
            }
            assert!((off[i] - s / 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn euclidean_examples() {
        let mut a = vec![0.0; 6];
        a[0] = 1.0;
        let b: Vec<f64> = a.iter().map(|x| -x).collect();
        assert_eq!(distance_euclidean(&a, &a).unwrap(), 0.0);
        assert_eq!(distance_euclidean(&a, &b).unwrap(), 4.0);
        assert!(distance_euclidean(&a, &[0.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = randv(&mut rng, 50);
        let y = randv(&mut rng, 50);
        let mut s = 0.0;
        for i in 0..50 {
            s += (x[i] - y[i]).powi(2);
        }
        assert!((distance_euclidean(&x, &y).unwrap() - s).abs() < 1e-12);
    }

    fn atf(ops: &BlockDft, w: &[f64], taps: usize) -> Vec<Complex64> {
        w.chunks(taps).flat_map(|c| ops.embed_filter(c).unwrap()).collect()
    }

    #[test]
    fn kf_distance_with_unit_weights_is_scaled_euclidean() {
        let frame = FrameConfig::new(8, 8, 2, 8000.0).unwrap();
        let ops = BlockDft::new(frame).unwrap();
        let m = frame.dft_len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = randv(&mut rng, 16);
        let b = randv(&mut rng, 16);
        let (ca, cb) = (atf(&ops, &a, 8), atf(&ops, &b, 8));
        let ones = DiagonalUncertainty::uniform(ca.len(), 1.0).unwrap();
        assert_eq!(distance_kf(&ca, &ca, &ones).unwrap(), 0.0);
        let dk = distance_kf(&ca, &cb, &ones).unwrap();
        assert!((dk - m * distance_euclidean(&a, &b).unwrap()).abs() < 1e-9);
        let scaled = DiagonalUncertainty::uniform(ca.len(), 4.0).unwrap();
        assert!((distance_kf(&ca, &cb, &scaled).unwrap() - dk / 4.0).abs() < 1e-12);
    }

    #[test]
    fn uncertainty_is_floored_and_validated() {
        let p = DiagonalUncertainty::new(vec![0.0, 2.0]).unwrap();
        assert_eq!(p.inverse_weights(), vec![1e12, 0.5]);
        assert!(DiagonalUncertainty::new(vec![-1.0]).is_err());
        assert!(DiagonalUncertainty::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn kf_ranking_with_unit_weights_matches_euclidean() {
        let frame = FrameConfig::new(16, 16, 1, 8000.0).unwrap();
        let ops = BlockDft::new(frame).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> = (0..200).map(|_| randv(&mut rng, 16)).collect();
        let set = TrainingSet::new(1, 16, 8000.0, 0, pts).unwrap();
        let bank = AtfBank::new(&set, &ops).unwrap();
        let query = randv(&mut rng, 16);
        let ones = DiagonalUncertainty::uniform(32, 1.0).unwrap();
        let e = knn_select(&query, &set, 200).unwrap();
        let k = knn_select_kf(&atf(&ops, &query, 16), &ones, &bank, 200).unwrap();
        assert_eq!(e, k);
    }

    #[test]
    fn knn_hull_of_three_points_matches_pca_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..3).map(|_| randv(&mut rng, 3)).collect();
        let rows: Vec<&[f64]> = pts.iter().map(|v| v.as_slice()).collect();
        let knn = build_knn_subspace(&rows).unwrap();
        let pca = fit_pca_subspace(&rows, 2).unwrap();
        assert_eq!(knn.dim(), 2);
        // Compare the operators column by column on the standard basis.
        for i in 0..3 {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            let a = knn.project(&e).unwrap();
            let b = pca.project(&e).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-8));
        }
    }

    fn subspace_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
        (2usize..12).prop_flat_map(|q| {
            let vec = move || proptest::collection::vec(-10.0f64..10.0, q);
            (vec(), proptest::collection::vec(vec(), 0..q), vec())
        })
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_non_expansive((offset, cols, w) in subspace_strategy()) {
            let s = AffineSubspace::new(offset.clone(), cols).unwrap();
            let p = s.project(&w).unwrap();
            let pp = s.project(&p).unwrap();
            let scale = p.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).abs() <= 1e-9 * scale);
            }
            let d_in = sq_dist(&w, &offset).sqrt();
            let d_out = sq_dist(&p, &offset).sqrt();
            prop_assert!(d_out <= d_in + 1e-9);
            // Orthonormal basis has unit, mutually orthogonal columns.
            let u = s.orthonormal_basis();
            for i in 0..u.len() {
                for j in 0..u.len() {
                    let d: f64 = u[i].iter().zip(&u[j]).map(|(a, b)| a * b).sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((d - target).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn kf_ranking_invariant_to_uncertainty_scale(seed: u64, c in 1e-3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m: Vec<Complex64> = (0..8).map(|_| Complex64::new(rng.random(), rng.random())).collect();
            let p: Vec<f64> = (0..8).map(|_| rng.random_range(0.1..2.0)).collect();
            let base = DiagonalUncertainty::new(p.clone()).unwrap();
            let scaled = DiagonalUncertainty::new(p.iter().map(|v| v * c).collect()).unwrap();
            let cands: Vec<Vec<Complex64>> = (0..10)
                .map(|_| (0..8).map(|_| Complex64::new(rng.random(), rng.random())).collect())
                .collect();
            let d0: Vec<f64> = cands.iter().map(|x| distance_kf(x, &m, &base).unwrap()).collect();
            let d1: Vec<f64> = cands.iter().map(|x| distance_kf(x, &m, &scaled).unwrap()).collect();
            for (a, b) in d0.iter().zip(&d1) {
                prop_assert!((a / c - b).abs() <= 1e-9 * a.max(1.0));
            }
            let mut r0: Vec<usize> = (0..10).collect();
            let mut r1 = r0.clone();
            r0.sort_by(|&i, &j| d0[i].total_cmp(&d0[j]));
            r1.sort_by(|&i, &j| d1[i].total_cmp(&d1[j]));
            prop_assert_eq!(r0, r1);
        }
    }
}
