use nalgebra::{DMatrix, SymmetricEigen};

use crate::dsp::check_len;
use crate::error::{Error, Result};

use super::affine::AffineSubspace;

/// Leading principal directions of a local training set.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    /// Orthonormal eigenvectors of the `d` largest eigenvalues.
    pub columns: Vec<Vec<f64>>,
    /// All eigenvalues of the sample covariance (normalised by `K - 1`) that
    /// the data can support, in non-increasing order. Remaining eigenvalues
    /// are zero.
    pub eigenvalues: Vec<f64>,
}

/// Principal-component basis of `members` around `offset`.
///
/// With fewer samples than dimensions the eigenproblem is solved on the
/// `K x K` Gram matrix of the centred samples, which shares its nonzero
/// spectrum with the `Q x Q` covariance.
pub fn fit_basis_pca(members: &[&[f64]], offset: &[f64], d: usize) -> Result<PcaBasis> {
    let n = members.len();
    if n < 2 {
        return Err(Error::invalid("PCA needs at least two samples"));
    }
    let q = offset.len();
    for m in members {
        check_len(m.len(), q)?;
    }
    if d > q.min(n - 1) {
        return Err(Error::invalid(format!("subspace dimension {d} exceeds min(Q, K-1) = {}", q.min(n - 1))));
    }
    let scale = 1.0 / (n - 1) as f64;
    let centred = DMatrix::from_fn(q, n, |i, j| members[j][i] - offset[i]);

    if n - 1 < q {
        let gram = centred.transpose() * &centred * scale;
        let (values, vectors) = sorted_eigen(gram);
        let mut columns = Vec::with_capacity(d);
        for (k, &lambda) in values.iter().enumerate().take(d) {
            let u = vectors.column(k);
            let v = &centred * u;
            let norm = v.norm();
            if lambda <= 0.0 || norm == 0.0 {
                break;
            }
            columns.push(v.iter().map(|x| x / norm).collect());
        }
        let eigenvalues = values.into_iter().take(n - 1).map(|v| v.max(0.0)).collect();
        Ok(PcaBasis { columns, eigenvalues })
    } else {
        let cov = &centred * centred.transpose() * scale;
        let (values, vectors) = sorted_eigen(cov);
        let columns = (0..d).map(|k| vectors.column(k).iter().copied().collect()).collect();
        let eigenvalues = values.into_iter().map(|v| v.max(0.0)).collect();
        Ok(PcaBasis { columns, eigenvalues })
    }
}

/// Offset plus PCA basis of `members` with dimension `min(d, K - 1, Q)`.
pub fn fit_pca_subspace(members: &[&[f64]], d: usize) -> Result<AffineSubspace> {
    let offset = super::fit_offset(members)?;
    let cap = offset.len().min(members.len().saturating_sub(1));
    if d.min(cap) == 0 {
        return Ok(AffineSubspace::offset_only(offset));
    }
    let pca = fit_basis_pca(members, &offset, d.min(cap))?;
    AffineSubspace::new(offset, pca.columns)
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}
