use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::check_len;
use crate::error::{Error, Result};

use super::sq_dist;

/// Iteration cap for Lloyd refinement.
pub const MAX_ITERATIONS: usize = 300;

/// Result of a k-means clustering.
#[derive(Debug, Clone)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Total squared distance to the assigned centroid after each assignment step.
    pub distortion: Vec<f64>,
    pub converged: bool,
}

impl KMeans {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&k| self.assignments[k] == cluster).collect()
    }
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Ties in assignment go to the lowest centroid index. Clusters that become
/// empty are moved onto the points farthest from their current centroids.
pub fn kmeans(points: &[&[f64]], clusters: usize, seed: u64) -> Result<KMeans> {
    let n = points.len();
    if clusters == 0 || clusters > n {
        return Err(Error::invalid(format!("cluster count {clusters} must lie in 1..={n}")));
    }
    let q = points[0].len();
    for p in points {
        check_len(p.len(), q)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(points, clusters, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut distortion = Vec::new();
    let mut converged = false;

    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        let mut total = 0.0;
        let mut dist_to_own = vec![0.0; n];
        for (k, p) in points.iter().enumerate() {
            let (best, d) = nearest(&centroids, p);
            changed |= assignments[k] != best;
            assignments[k] = best;
            dist_to_own[k] = d;
            total += d;
        }
        distortion.push(total);
        if !changed {
            converged = true;
            break;
        }

        let mut sums = vec![vec![0.0; q]; clusters];
        let mut counts = vec![0usize; clusters];
        for (k, p) in points.iter().enumerate() {
            counts[assignments[k]] += 1;
            for (s, v) in sums[assignments[k]].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        let mut far: Vec<usize> = (0..n).collect();
        far.sort_by(|&a, &b| dist_to_own[b].total_cmp(&dist_to_own[a]).then(a.cmp(&b)));
        let mut far = far.into_iter();
        for c in 0..clusters {
            if counts[c] == 0 {
                // Every point was assigned, so at least one cluster is populated
                // and there are at least as many points as empty clusters.
                let j = far.next().expect("fewer points than clusters");
                centroids[c] = points[j].to_vec();
            } else {
                let inv = 1.0 / counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s * inv).collect();
            }
        }
    }
    Ok(KMeans { assignments, centroids, distortion, converged })
}

fn seed_plus_plus(points: &[&[f64]], clusters: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, points[first])).collect();
    while centroids.len() < clusters {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (k, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(k);
                    break;
                }
            }
            pick.unwrap_or_else(|| (0..n).rev().find(|&k| d2[k] > 0.0).unwrap())
        } else {
            (0..n).find(|&k| !chosen[k]).unwrap()
        };
        chosen[next] = true;
        centroids.push(points[next].to_vec());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, points[next]));
        }
    }
    centroids
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centroids.iter().enumerate() {
        let d = sq_dist(p, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};
    use rand_distr::StandardNormal;

    fn rows(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|x| x.as_slice()).collect()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]];
        let km = kmeans(&rows(&pts), 1, 9).unwrap();
        assert_eq!(km.assignments, vec![0, 0, 0]);
        assert!((km.centroids[0][0] - 2.0).abs() < 1e-15);
        assert!((km.centroids[0][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_cluster_per_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec<f64>> = (0..15).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
        let km = kmeans(&rows(&pts), 15, 2).unwrap();
        assert_eq!(*km.distortion.last().unwrap(), 0.0);
        let mut a = km.assignments.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 15);
    }

    #[test]
    fn separates_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for k in 0..100 {
            let c = if k % 2 == 0 { -10.0 } else { 10.0 };
            pts.push((0..4).map(|_| c + rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>());
            labels.push(k % 2);
        }
        let km = kmeans(&rows(&pts), 2, 4).unwrap();
        let flip = km.assignments[0] != labels[0];
        assert!(km.assignments.iter().zip(&labels).all(|(&a, &l)| (a != l) == flip));
    }

    #[test]
    fn duplicates_do_not_break_seeding() {
        let pts = vec![vec![1.0]; 4];
        let km = kmeans(&rows(&pts), 3, 0).unwrap();
        assert!(km.distortion.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn rejects_bad_cluster_count() {
        let pts = vec![vec![1.0]; 2];
        assert!(kmeans(&rows(&pts), 0, 0).is_err());
        assert!(kmeans(&rows(&pts), 3, 0).is_err());
    }

    proptest! {
        #[test]
        fn distortion_never_increases(seed: u64, n in 5usize..60, k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
            let km = kmeans(&rows(&pts), k.min(n), seed).unwrap();
            for w in km.distortion.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
            }
            prop_assert!(km.distortion.len() <= MAX_ITERATIONS);
        }
    }
}
