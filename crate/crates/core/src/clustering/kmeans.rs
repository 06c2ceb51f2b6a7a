//! Seeded k-means (k-means++ initialisation, Lloyd iterations) used as a
//! comparison baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::distance::sq_euclidean;
use crate::embedding::EmbeddingMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub labels: Vec<i32>,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: &[f32], c: &[f64]) -> f64 {
    a.iter()
        .zip(c)
        .map(|(&x, &y)| {
            let d = x as f64 - y;
            d * d
        })
        .sum()
}

fn plus_plus(y: &EmbeddingMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = y.n();
    let to_f64 = |i: usize| y.row(i).iter().map(|&v| v as f64).collect::<Vec<f64>>();
    let first = rng.random_range(0..n);
    let mut centroids = vec![to_f64(first)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_euclidean(y.row(i), y.row(first)))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = to_f64(next);
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(y.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Runs k-means until the largest centroid move falls below `tol` or
/// `max_iter` assignment steps have run. Assignment ties go to the lower
/// centroid index; a cluster that empties keeps its previous centroid.
pub fn kmeans_baseline(
    y: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult, ClusterError> {
    let n = y.n();
    if k == 0 {
        return Err(ClusterError::InvalidParams("k must be >= 1".into()));
    }
    if k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    let d = y.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(y, k, &mut rng);
    let mut labels = vec![0i32; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let assigned: Vec<(i32, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let row = y.row(i);
                let mut best = (0i32, f64::INFINITY);
                for (c, centroid) in centroids.iter().enumerate() {
                    let dist = sq_dist(row, centroid);
                    if dist < best.1 {
                        best = (c as i32, dist);
                    }
                }
                best
            })
            .collect();
        history.push(assigned.iter().map(|a| a.1).sum());
        for (l, a) in labels.iter_mut().zip(&assigned) {
            *l = a.0;
        }

        let mut sums = vec![vec![0f64; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l as usize] += 1;
            for (s, &v) in sums[l as usize].iter_mut().zip(y.row(i)) {
                *s += v as f64;
            }
        }
        let mut shift = 0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            let mut moved = 0f64;
            for (old, s) in centroids[c].iter_mut().zip(&sums[c]) {
                let new = s * inv;
                moved += (new - *old) * (new - *old);
                *old = new;
            }
            shift = shift.max(moved.sqrt());
        }
        if shift < tol {
            converged = true;
            break;
        }
    }
    Ok(KMeansResult {
        labels,
        centroids,
        inertia_history: history,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> EmbeddingMatrix {
        let mut rows = Vec::new();
        for c in [0.0f32, 10.0, 20.0] {
            for j in 0..10 {
                rows.push([c + j as f32 * 0.1, -c]);
            }
        }
        EmbeddingMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn recovers_separated_groups() {
        let r = kmeans_baseline(&blobs(), 3, 4, 100, 1e-9).unwrap();
        assert!(r.converged);
        for g in 0..3 {
            let l = r.labels[g * 10];
            assert!(r.labels[g * 10..g * 10 + 10].iter().all(|&x| x == l));
        }
        let mut distinct = r.labels.clone();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn inertia_never_increases() {
        let r = kmeans_baseline(&blobs(), 5, 11, 50, 0.0).unwrap();
        for w in r.inertia_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn too_many_clusters() {
        assert!(matches!(
            kmeans_baseline(&blobs(), 31, 0, 10, 1e-6),
            Err(ClusterError::KTooLarge { k: 31, n: 30 })
        ));
    }

    #[test]
    fn seeded_runs_match() {
        let a = kmeans_baseline(&blobs(), 4, 9, 50, 1e-9).unwrap();
        let b = kmeans_baseline(&blobs(), 4, 9, 50, 1e-9).unwrap();
        assert_eq!(a, b);
    }
}
