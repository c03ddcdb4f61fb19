use crate::dsp::check_len;
use crate::error::Result;

use super::{fit_pca_subspace, kmeans, sq_dist, AffineSubspace, KMeans};

/// k-means mixture of local PCA subspaces.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    subspaces: Vec<AffineSubspace>,
    centroids: Vec<Vec<f64>>,
    assignments: Vec<usize>,
}

impl MixtureModel {
    /// Clusters `points` into `clusters` groups and fits a PCA subspace of
    /// dimension `min(dim, K_i - 1)` to each.
    pub fn fit(points: &[&[f64]], clusters: usize, dim: usize, seed: u64) -> Result<Self> {
        Self::from_clustering(points, kmeans(points, clusters, seed)?, dim)
    }

    /// Fits local subspaces to an existing clustering of `points`.
    pub fn from_clustering(points: &[&[f64]], km: KMeans, dim: usize) -> Result<Self> {
        check_len(km.assignments.len(), points.len())?;
        let mut subspaces = Vec::with_capacity(km.centroids.len());
        for c in 0..km.centroids.len() {
            let members: Vec<&[f64]> = km.members(c).into_iter().map(|k| points[k]).collect();
            subspaces.push(fit_pca_subspace(&members, dim)?);
        }
        Ok(Self { subspaces, centroids: km.centroids, assignments: km.assignments })
    }

    pub fn len(&self) -> usize {
        self.subspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subspaces.is_empty()
    }

    pub fn subspace(&self, i: usize) -> &AffineSubspace {
        &self.subspaces[i]
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    /// Cluster index of each training point.
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    /// Cluster with the nearest centroid; ties go to the lowest index.
    pub fn select(&self, w: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centroids.iter().enumerate() {
            let d = sq_dist(w, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Projection onto the subspace of the nearest centroid.
    pub fn project(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.subspaces[self.select(w)].project(w)
    }

    /// Projection of `w` onto whichever subspace reproduces it best.
    pub fn project_best(&self, w: &[f64]) -> Result<(usize, Vec<f64>)> {
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for (i, s) in self.subspaces.iter().enumerate() {
            let p = s.project(w)?;
            let err = sq_dist(w, &p);
            if best.as_ref().is_none_or(|b| err < b.1) {
                best = Some((i, err, p));
            }
        }
        let (i, _, p) = best.expect("mixture has at least one subspace");
        Ok((i, p))
    }
}
