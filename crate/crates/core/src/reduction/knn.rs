//! k-nearest-neighbor graphs, exact (brute force) or approximate
//! (random-projection forest seeding followed by neighbor-descent refinement).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Metric, ReductionError};
use crate::distance::{dot_fast, sq_euclidean_fast};
use crate::embedding::EmbeddingMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnMode {
    Exact,
    Approximate,
    /// Exact below [`AUTO_EXACT_LIMIT`] points, approximate above.
    Auto,
}

pub const AUTO_EXACT_LIMIT: usize = 20_000;

/// Row-sorted neighbor lists; row `i` never contains `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub k: usize,
    pub exact: bool,
    ids: Vec<u32>,
    dists: Vec<f32>,
}

impl NeighborGraph {
    pub fn n(&self) -> usize {
        self.ids.len() / self.k.max(1)
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.ids[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f32] {
        &self.dists[i * self.k..(i + 1) * self.k]
    }

    fn from_rows(k: usize, exact: bool, rows: Vec<Vec<(f32, u32)>>) -> Self {
        let mut ids = Vec::with_capacity(rows.len() * k);
        let mut dists = Vec::with_capacity(rows.len() * k);
        for row in rows {
            debug_assert_eq!(row.len(), k);
            for (d, j) in row {
                ids.push(j);
                dists.push(d);
            }
        }
        Self {
            k,
            exact,
            ids,
            dists,
        }
    }
}

/// Points prepared for a metric: cosine rows are L2-normalized once up front.
pub(crate) struct Prepared<'a> {
    data: std::borrow::Cow<'a, [f32]>,
    d: usize,
    metric: Metric,
}

impl<'a> Prepared<'a> {
    pub(crate) fn new(x: &'a EmbeddingMatrix, metric: Metric) -> Self {
        let d = x.d();
        let data = match metric {
            Metric::Euclidean => std::borrow::Cow::Borrowed(x.values()),
            Metric::Cosine => {
                let mut v = x.values().to_vec();
                v.par_chunks_mut(d.max(1)).for_each(|row| {
                    let norm = row
                        .iter()
                        .map(|a| f64::from(*a).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if norm > 0.0 {
                        row.iter_mut()
                            .for_each(|a| *a = (f64::from(*a) / norm) as f32);
                    }
                });
                std::borrow::Cow::Owned(v)
            }
        };
        Self { data, d, metric }
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub(crate) fn dist(&self, i: usize, j: usize) -> f32 {
        let (a, b) = (self.row(i), self.row(j));
        match self.metric {
            Metric::Euclidean => sq_euclidean_fast(a, b).sqrt(),
            Metric::Cosine => {
                let za = a.iter().all(|v| *v == 0.0);
                let zb = b.iter().all(|v| *v == 0.0);
                if za || zb {
                    return if za && zb { 0.0 } else { 1.0 };
                }
                (1.0 - dot_fast(a, b)).max(0.0)
            }
        }
    }
}

/// Sorted bounded list of `(distance, id)` keeping the `k` smallest.
#[inline]
fn push_candidate(list: &mut Vec<(f32, u32)>, k: usize, cand: (f32, u32)) -> bool {
    if list.len() == k {
        let last = list[k - 1];
        if (cand.0, cand.1) >= (last.0, last.1) {
            return false;
        }
    }
    if list.iter().any(|&(_, j)| j == cand.1) {
        return false;
    }
    let pos = list.partition_point(|&(d, j)| (d, j) < (cand.0, cand.1));
    list.insert(pos, cand);
    list.truncate(k);
    true
}

pub fn knn_graph(
    x: &EmbeddingMatrix,
    k: usize,
    metric: Metric,
    mode: KnnMode,
    seed: u64,
) -> Result<NeighborGraph, ReductionError> {
    let n = x.n();
    if k >= n {
        return Err(ReductionError::KTooLarge { k, n });
    }
    if k == 0 {
        return Err(ReductionError::InvalidParams("k must be >= 1".into()));
    }
    let points = Prepared::new(x, metric);
    let exact = match mode {
        KnnMode::Exact => true,
        KnnMode::Approximate => false,
        KnnMode::Auto => n <= AUTO_EXACT_LIMIT,
    };
    let rows = if exact {
        exact_rows(&points, n, k)
    } else {
        approximate_rows(&points, n, k, seed)
    };
    Ok(NeighborGraph::from_rows(k, exact, rows))
}

fn exact_rows(points: &Prepared<'_>, n: usize, k: usize) -> Vec<Vec<(f32, u32)>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = Vec::with_capacity(k + 1);
            for j in 0..n {
                if j != i {
                    push_candidate(&mut best, k, (points.dist(i, j), j as u32));
                }
            }
            best
        })
        .collect()
}

fn rp_tree_leaves(points: &Prepared<'_>, n: usize, leaf_size: usize, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut leaves = Vec::new();
    let mut stack: Vec<Vec<u32>> = vec![(0..n as u32).collect()];
    let d = points.d;
    while let Some(idx) = stack.pop() {
        if idx.len() <= leaf_size {
            leaves.push(idx);
            continue;
        }
        let a = idx[rng.random_range(0..idx.len())] as usize;
        let mut b = idx[rng.random_range(0..idx.len())] as usize;
        if a == b {
            b = idx[(idx.iter().position(|&v| v as usize == a).unwrap() + 1) % idx.len()] as usize;
        }
        let (pa, pb) = (points.row(a), points.row(b));
        let normal: Vec<f32> = (0..d).map(|t| pa[t] - pb[t]).collect();
        let offset: f32 = (0..d).map(|t| normal[t] * (pa[t] + pb[t]) * 0.5).sum();
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &i in &idx {
            let margin = dot_fast(&normal, points.row(i as usize)) - offset;
            if margin < 0.0 || (margin == 0.0 && rng.random_bool(0.5)) {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        if left.is_empty() || right.is_empty() {
            let mut all = idx;
            all.shuffle(&mut rng);
            let half = all.len() / 2;
            right = all.split_off(half);
            left = all;
        }
        stack.push(right);
        stack.push(left);
    }
    leaves
}

struct RpTree {
    leaf_of: Vec<u32>,
    offsets: Vec<usize>,
    members: Vec<u32>,
}

impl RpTree {
    fn build(points: &Prepared<'_>, n: usize, leaf_size: usize, seed: u64) -> Self {
        let leaves = rp_tree_leaves(points, n, leaf_size, seed);
        let mut leaf_of = vec![0u32; n];
        let mut offsets = Vec::with_capacity(leaves.len() + 1);
        let mut members = Vec::with_capacity(n);
        for (l, leaf) in leaves.iter().enumerate() {
            offsets.push(members.len());
            for &i in leaf {
                leaf_of[i as usize] = l as u32;
            }
            members.extend_from_slice(leaf);
        }
        offsets.push(members.len());
        Self {
            leaf_of,
            offsets,
            members,
        }
    }

    fn leaf_members(&self, i: usize) -> &[u32] {
        let l = self.leaf_of[i] as usize;
        &self.members[self.offsets[l]..self.offsets[l + 1]]
    }
}

fn approximate_rows(points: &Prepared<'_>, n: usize, k: usize, seed: u64) -> Vec<Vec<(f32, u32)>> {
    let n_trees = (5 + ((n as f64).sqrt() / 20.0).round() as usize).min(32);
    let leaf_size = (2 * k).max(30);
    let forest: Vec<RpTree> = (0..n_trees)
        .into_par_iter()
        .map(|t| RpTree::build(points, n, leaf_size, seed.wrapping_add(t as u64 * 0x9e37)))
        .collect();

    let mut rows: Vec<Vec<(f32, u32)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cands: Vec<u32> = Vec::new();
            for tree in &forest {
                cands.extend_from_slice(tree.leaf_members(i));
            }
            cands.sort_unstable();
            cands.dedup();
            let mut best = Vec::with_capacity(k + 1);
            for &j in &cands {
                if j as usize != i {
                    push_candidate(&mut best, k, (points.dist(i, j as usize), j));
                }
            }
            if best.len() < k {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x2545_f491));
                while best.len() < k {
                    let j = rng.random_range(0..n);
                    if j != i {
                        push_candidate(&mut best, k, (points.dist(i, j), j as u32));
                    }
                }
            }
            best
        })
        .collect();

    nn_descent(points, &mut rows, k);
    rows
}

/// Neighbor-of-neighbor refinement; each round reads the previous graph and
/// writes a new one so the result does not depend on scheduling.
fn nn_descent(points: &Prepared<'_>, rows: &mut Vec<Vec<(f32, u32)>>, k: usize) {
    let n = rows.len();
    let max_iters = ((n as f64).log2().round() as usize).clamp(5, 15);
    let mut is_new: Vec<Vec<bool>> = vec![vec![true; k]; n];
    for _ in 0..max_iters {
        let mut reverse: Vec<Vec<(u32, bool)>> = vec![Vec::new(); n];
        for (i, row) in rows.iter().enumerate() {
            for (slot, &(_, j)) in row.iter().enumerate() {
                let r = &mut reverse[j as usize];
                if r.len() < k {
                    r.push((i as u32, is_new[i][slot]));
                }
            }
        }
        let current = &*rows;
        let flags = &is_new;
        type Update = (Vec<(f32, u32)>, Vec<bool>, usize);
        let updated: Vec<Update> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut best = current[i].clone();
                let mut seen: Vec<u32> = Vec::new();
                let sources = current[i]
                    .iter()
                    .zip(&flags[i])
                    .map(|(&(_, j), &f)| (j, f))
                    .chain(reverse[i].iter().copied());
                for (src, src_new) in sources {
                    let src = src as usize;
                    for (slot, &(_, m)) in current[src].iter().enumerate() {
                        if !(src_new || flags[src][slot]) || m as usize == i {
                            continue;
                        }
                        seen.push(m);
                    }
                    if src_new {
                        for &(m, _) in &reverse[src] {
                            if m as usize != i {
                                seen.push(m);
                            }
                        }
                    }
                }
                seen.sort_unstable();
                seen.dedup();
                let mut changes = 0;
                for m in seen {
                    if push_candidate(&mut best, k, (points.dist(i, m as usize), m)) {
                        changes += 1;
                    }
                }
                let old: std::collections::HashSet<u32> = current[i].iter().map(|p| p.1).collect();
                let new_flags = best.iter().map(|p| !old.contains(&p.1)).collect();
                (best, new_flags, changes)
            })
            .collect();
        let mut total_changes = 0;
        for (i, (row, new_flags, changes)) in updated.into_iter().enumerate() {
            rows[i] = row;
            is_new[i] = new_flags;
            total_changes += changes;
        }
        if (total_changes as f64) < 0.001 * (n * k) as f64 {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_points() {
        let x = EmbeddingMatrix::from_rows(&[[0.0f32], [1.0], [3.0]]).unwrap();
        let g = knn_graph(&x, 1, Metric::Euclidean, KnnMode::Exact, 0).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.neighbors(2), &[1]);
        assert_eq!(g.distances(2), &[2.0]);
    }

    #[test]
    fn k_equal_n_is_rejected() {
        let x = EmbeddingMatrix::zeros(3, 2);
        assert!(matches!(
            knn_graph(&x, 3, Metric::Euclidean, KnnMode::Exact, 0),
            Err(ReductionError::KTooLarge { k: 3, n: 3 })
        ));
    }

    #[test]
    fn rows_sorted_without_self() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f32>> = (0..300)
            .map(|_| (0..5).map(|_| rng.random::<f32>()).collect())
            .collect();
        let x = EmbeddingMatrix::from_rows(&rows).unwrap();
        for mode in [KnnMode::Exact, KnnMode::Approximate] {
            let g = knn_graph(&x, 7, Metric::Cosine, mode, 1).unwrap();
            for i in 0..300 {
                assert!(!g.neighbors(i).contains(&(i as u32)));
                assert!(g.distances(i).windows(2).all(|w| w[0] <= w[1]));
                assert!(g.distances(i).iter().all(|d| *d >= 0.0));
            }
        }
    }

    #[test]
    fn approximate_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f32>> = (0..500)
            .map(|_| (0..8).map(|_| rng.random::<f32>()).collect())
            .collect();
        let x = EmbeddingMatrix::from_rows(&rows).unwrap();
        let a = knn_graph(&x, 10, Metric::Euclidean, KnnMode::Approximate, 5).unwrap();
        let b = knn_graph(&x, 10, Metric::Euclidean, KnnMode::Approximate, 5).unwrap();
        assert_eq!(a, b);
    }
}
