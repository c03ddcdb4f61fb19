use crate::dsp::check_len;
use crate::error::{Error, Result};

use super::fit_offset;

/// Relative pivot threshold below which a basis column is treated as
/// linearly dependent and dropped.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Affine subspace `{ offset + V β }` of `R^Q`.
///
/// The basis columns are run through a column-pivoted QR factorisation on
/// construction. Columns whose pivot falls below [`RANK_TOLERANCE`] times the
/// leading pivot are discarded, so `VᵀV = RᵀR` is always invertible and the
/// projector `V (VᵀV)⁻¹ Vᵀ` equals `U Uᵀ` for the orthonormal factor `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSubspace {
    offset: Vec<f64>,
    basis: Vec<Vec<f64>>,
    orthonormal: Vec<Vec<f64>>,
    r_factor: Vec<Vec<f64>>,
}

impl AffineSubspace {
    /// Zero-dimensional subspace: every point projects onto `offset`.
    pub fn offset_only(offset: Vec<f64>) -> Self {
        Self { offset, basis: Vec::new(), orthonormal: Vec::new(), r_factor: Vec::new() }
    }

    pub fn new(offset: Vec<f64>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let q = offset.len();
        for c in &columns {
            check_len(c.len(), q)?;
        }
        if offset.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("subspace parameters must be finite"));
        }
        let qr = pivoted_qr(&columns, RANK_TOLERANCE);
        let basis = qr.pivots.iter().map(|&j| columns[j].clone()).collect();
        Ok(Self { offset, basis, orthonormal: qr.q, r_factor: qr.r })
    }

    pub fn dim(&self) -> usize {
        self.orthonormal.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.offset.len()
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Retained basis columns `V`, in pivot order.
    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Orthonormal basis of the same span.
    pub fn orthonormal_basis(&self) -> &[Vec<f64>] {
        &self.orthonormal
    }

    /// Upper-triangular `R` with `V = U R`, stored by columns; `VᵀV = RᵀR`.
    pub fn gram_factor(&self) -> &[Vec<f64>] {
        &self.r_factor
    }

    /// Orthogonal projection `w̄ + L (w - w̄)`.
    pub fn project(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len(w.len(), self.offset.len())?;
        let centred: Vec<f64> = w.iter().zip(&self.offset).map(|(a, b)| a - b).collect();
        let mut out = self.offset.clone();
        for u in &self.orthonormal {
            let coef = dot(u, &centred);
            for (o, ui) in out.iter_mut().zip(u) {
                *o += coef * ui;
            }
        }
        Ok(out)
    }
}

/// Affine hull of `K_τ` neighbours, given in order of increasing distance to
/// the query. The offset is their mean; the basis holds the differences of the
/// first `K_τ - 1` neighbours to that mean. The omitted (farthest) neighbour
/// stays in the hull because the differences of all neighbours sum to zero.
pub fn build_knn_subspace(neighbours: &[&[f64]]) -> Result<AffineSubspace> {
    if neighbours.len() < 2 {
        return Err(Error::invalid("a neighbourhood subspace needs at least two neighbours"));
    }
    let offset = fit_offset(neighbours)?;
    let columns = neighbours[..neighbours.len() - 1]
        .iter()
        .map(|v| v.iter().zip(&offset).map(|(a, b)| a - b).collect())
        .collect();
    AffineSubspace::new(offset, columns)
}

struct PivotedQr {
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    pivots: Vec<usize>,
}

/// Column-pivoted Gram-Schmidt with one reorthogonalisation pass per column.
/// Stops once the largest remaining residual norm drops below `tol` times
/// the first pivot.
fn pivoted_qr(columns: &[Vec<f64>], tol: f64) -> PivotedQr {
    let mut work: Vec<Vec<f64>> = columns.to_vec();
    let mut remaining: Vec<usize> = (0..columns.len()).collect();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut r: Vec<Vec<f64>> = Vec::new();
    let mut pivots = Vec::new();
    let mut leading = 0.0;

    while !remaining.is_empty() {
        // Ties go to the lowest original index.
        let (pos, norm) = remaining
            .iter()
            .enumerate()
            .map(|(pos, &j)| (pos, dot(&work[j], &work[j]).sqrt()))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivots.is_empty() {
            leading = norm;
        }
        if norm <= tol * leading || norm == 0.0 {
            break;
        }
        let j = remaining.remove(pos);
        let mut v = std::mem::take(&mut work[j]);
        for u in &q {
            let c = dot(u, &v);
            axpy(-c, u, &mut v);
        }
        let norm = dot(&v, &v).sqrt();
        if norm <= tol * leading {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        for &k in &remaining {
            let c = dot(&v, &work[k]);
            axpy(-c, &v, &mut work[k]);
        }
        let mut col: Vec<f64> = q.iter().map(|u| dot(u, &columns[j])).collect();
        col.push(dot(&v, &columns[j]));
        r.push(col);
        q.push(v);
        pivots.push(j);
    }
    PivotedQr { q, r, pivots }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
