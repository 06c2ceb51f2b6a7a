//! HDBSCAN over euclidean space.
//!
//! The pipeline is: core distances, the minimum spanning tree of the
//! mutual-reachability graph (Prim, distances computed on the fly), the
//! single-linkage hierarchy, its condensation by `min_cluster_size`, and
//! flat cluster extraction by excess of mass (or leaf selection).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::union_find::DisjointSet;
use super::{ClusterError, ClusterModel, ClusterParams, Selection, OUTLIER};
use crate::distance::euclidean;
use crate::embedding::EmbeddingMatrix;

/// λ assigned to zero-distance merges (duplicate points).
pub const LAMBDA_CAP: f64 = 1e12;

const PARALLEL_THRESHOLD: usize = 4096;

/// Distance from each point to its `min_samples`-th nearest other point.
pub fn core_distances(y: &EmbeddingMatrix, min_samples: usize) -> Result<Vec<f64>, ClusterError> {
    let n = y.n();
    if min_samples >= n {
        return Err(ClusterError::KTooLarge { k: min_samples, n });
    }
    if min_samples == 0 {
        return Err(ClusterError::InvalidParams(
            "min_samples must be >= 1".into(),
        ));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let xi = y.row(i);
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| euclidean(xi, y.row(j)))
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

#[inline]
pub fn mutual_reachability(d_ij: f64, core_i: f64, core_j: f64) -> f64 {
    d_ij.max(core_i).max(core_j)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Prim's algorithm on the complete mutual-reachability graph, starting from
/// point 0. Frontier ties go to the lowest point index.
pub fn build_mst(y: &EmbeddingMatrix, core: &[f64]) -> Vec<MstEdge> {
    let n = y.n();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0usize;
    in_tree[0] = true;

    let relax = |start: usize,
                 best: &mut [f64],
                 from: &mut [usize],
                 in_tree: &[bool],
                 current: usize|
     -> (f64, usize) {
        let xc = y.row(current);
        let mut local = (f64::INFINITY, usize::MAX);
        for (off, (b, f)) in best.iter_mut().zip(from.iter_mut()).enumerate() {
            let j = start + off;
            if in_tree[j] {
                continue;
            }
            let w = mutual_reachability(euclidean(xc, y.row(j)), core[current], core[j]);
            if w < *b {
                *b = w;
                *f = current;
            }
            if *b < local.0 {
                local = (*b, j);
            }
        }
        local
    };

    for _ in 1..n {
        let (w, next) = if n >= PARALLEL_THRESHOLD {
            let chunk = n.div_ceil(rayon::current_num_threads() * 4).max(256);
            let in_tree_ref = &in_tree;
            best.par_chunks_mut(chunk)
                .zip(from.par_chunks_mut(chunk))
                .enumerate()
                .map(|(c, (b, f))| relax(c * chunk, b, f, in_tree_ref, current))
                .reduce(
                    || (f64::INFINITY, usize::MAX),
                    |x, y| if (y.0, y.1) < (x.0, x.1) { y } else { x },
                )
        } else {
            relax(0, &mut best, &mut from, &in_tree, current)
        };
        debug_assert!(next != usize::MAX);
        edges.push(MstEdge {
            a: from[next],
            b: next,
            weight: w,
        });
        in_tree[next] = true;
        current = next;
    }
    edges
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensedEdge {
    /// Cluster id (`>= n_points`; the root is `n_points`).
    pub parent: usize,
    /// Point id (`< n_points`) or child cluster id.
    pub child: usize,
    pub lambda_val: f64,
    pub child_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub n_points: usize,
    pub edges: Vec<CondensedEdge>,
}

impl CondensedTree {
    pub fn root(&self) -> usize {
        self.n_points
    }

    /// Largest cluster id + 1 (cluster ids run from `n_points`).
    pub fn cluster_id_end(&self) -> usize {
        self.edges
            .iter()
            .map(|e| e.parent.max(e.child) + 1)
            .max()
            .unwrap_or(self.n_points + 1)
            .max(self.n_points + 1)
    }

    /// Child cluster ids directly under the root.
    pub fn root_children(&self) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.parent == self.root() && e.child >= self.n_points)
            .map(|e| e.child)
            .collect()
    }
}

fn lambda_of(weight: f64) -> f64 {
    if weight > 0.0 {
        (1.0 / weight).min(LAMBDA_CAP)
    } else {
        LAMBDA_CAP
    }
}

/// Single-linkage merge nodes: node `n + m` is the m-th merge.
struct Hierarchy {
    left: Vec<usize>,
    right: Vec<usize>,
    weight: Vec<f64>,
    size: Vec<usize>,
}

fn single_linkage(mst: &[MstEdge], n: usize) -> Hierarchy {
    let mut order: Vec<usize> = (0..mst.len()).collect();
    order.sort_by(|&i, &j| mst[i].weight.total_cmp(&mst[j].weight).then(i.cmp(&j)));
    let mut set = DisjointSet::new(n);
    let mut h = Hierarchy {
        left: Vec::with_capacity(n.saturating_sub(1)),
        right: Vec::with_capacity(n.saturating_sub(1)),
        weight: Vec::with_capacity(n.saturating_sub(1)),
        size: Vec::with_capacity(n.saturating_sub(1)),
    };
    let size_of = |h: &Hierarchy, node: usize| if node < n { 1 } else { h.size[node - n] };
    for e in order {
        let (ra, rb) = (set.find(mst[e].a), set.find(mst[e].b));
        let (na, nb) = (set.node[ra], set.node[rb]);
        let merged = n + h.left.len();
        let size = size_of(&h, na) + size_of(&h, nb);
        h.left.push(na);
        h.right.push(nb);
        h.weight.push(mst[e].weight);
        h.size.push(size);
        let root = set.union(ra, rb);
        set.node[root] = merged;
    }
    h
}

/// Sum of single-linkage merge heights, useful as a cross-check on MSTs.
pub fn single_linkage_heights(mst: &[MstEdge], n: usize) -> Vec<f64> {
    single_linkage(mst, n).weight
}

/// Condenses the single-linkage hierarchy of `mst` (over `n = mst.len() + 1`
/// points): a merge counts as a split only when both sides hold at least
/// `min_cluster_size` points; otherwise the smaller side's points leave the
/// parent at `λ = 1 / weight`.
pub fn condense_tree(mst: &[MstEdge], min_cluster_size: usize) -> CondensedTree {
    let n = mst.len() + 1;
    let h = single_linkage(mst, n);
    let mut edges = Vec::new();
    if n == 1 {
        edges.push(CondensedEdge {
            parent: 1,
            child: 0,
            lambda_val: 0.0,
            child_size: 1,
        });
        return CondensedTree { n_points: 1, edges };
    }
    let root_node = 2 * n - 2;
    let node_size = |node: usize| if node < n { 1 } else { h.size[node - n] };
    let children = |node: usize| (h.left[node - n], h.right[node - n]);

    let leaves_under = |node: usize, out: &mut Vec<usize>| {
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let (l, r) = children(x);
                stack.push(r);
                stack.push(l);
            }
        }
    };

    let mut next_label = n + 1;
    // (hierarchy node, condensed cluster label)
    let mut queue = std::collections::VecDeque::from([(root_node, n)]);
    let mut buf = Vec::new();
    while let Some((node, label)) = queue.pop_front() {
        if node < n {
            // A lone point reached as a relabelled continuation.
            continue;
        }
        let (left, right) = children(node);
        let lambda = lambda_of(h.weight[node - n]);
        let (ls, rs) = (node_size(left), node_size(right));
        let big_left = ls >= min_cluster_size;
        let big_right = rs >= min_cluster_size;
        match (big_left, big_right) {
            (true, true) => {
                for (child, size) in [(left, ls), (right, rs)] {
                    let child_label = next_label;
                    next_label += 1;
                    edges.push(CondensedEdge {
                        parent: label,
                        child: child_label,
                        lambda_val: lambda,
                        child_size: size,
                    });
                    queue.push_back((child, child_label));
                }
            }
            (false, false) => {
                for child in [left, right] {
                    buf.clear();
                    leaves_under(child, &mut buf);
                    for &p in &buf {
                        edges.push(CondensedEdge {
                            parent: label,
                            child: p,
                            lambda_val: lambda,
                            child_size: 1,
                        });
                    }
                }
            }
            (keep_left, _) => {
                let (kept, dropped) = if keep_left {
                    (left, right)
                } else {
                    (right, left)
                };
                buf.clear();
                leaves_under(dropped, &mut buf);
                for &p in &buf {
                    edges.push(CondensedEdge {
                        parent: label,
                        child: p,
                        lambda_val: lambda,
                        child_size: 1,
                    });
                }
                if kept < n {
                    edges.push(CondensedEdge {
                        parent: label,
                        child: kept,
                        lambda_val: lambda,
                        child_size: 1,
                    });
                } else {
                    queue.push_back((kept, label));
                }
            }
        }
    }
    CondensedTree { n_points: n, edges }
}

/// Selects flat clusters by excess of mass and labels points.
///
/// Stability of a cluster is `Σ_p (λ_p − λ_birth)` over the points it holds
/// (points leaving through a child cluster count at the split λ). Walking
/// leaves-up, a cluster is kept iff its stability exceeds the summed
/// stability of its best descendant selection. The root is never selected.
/// Final labels are ordered by decreasing size, ties by lower node id.
pub fn extract_clusters_eom(tree: &CondensedTree, params: &ClusterParams) -> ClusterModel {
    extract(tree, params, params.selection)
}

fn extract(tree: &CondensedTree, params: &ClusterParams, selection: Selection) -> ClusterModel {
    let n = tree.n_points;
    let root = tree.root();
    let end = tree.cluster_id_end();
    let m = end - n;
    let idx = |c: usize| c - n;

    let mut parent = vec![usize::MAX; m];
    let mut birth = vec![0f64; m];
    let mut stability = vec![0f64; m];
    let mut child_clusters: Vec<Vec<usize>> = vec![Vec::new(); m];
    for e in &tree.edges {
        if e.child >= n {
            parent[idx(e.child)] = e.parent;
            birth[idx(e.child)] = e.lambda_val;
            child_clusters[idx(e.parent)].push(e.child);
        }
    }
    for e in &tree.edges {
        stability[idx(e.parent)] += (e.lambda_val - birth[idx(e.parent)]) * e.child_size as f64;
    }
    let raw_stability = stability.clone();

    let mut selected = vec![false; m];
    match selection {
        Selection::ExcessOfMass => {
            let mut best = stability.clone();
            // Children always carry larger ids than their parent.
            for c in (n + 1..end).rev() {
                let kids = &child_clusters[idx(c)];
                if kids.is_empty() {
                    selected[idx(c)] = true;
                    continue;
                }
                let subtree: f64 = kids.iter().map(|&k| best[idx(k)]).sum();
                if stability[idx(c)] > subtree {
                    selected[idx(c)] = true;
                } else {
                    best[idx(c)] = subtree;
                }
            }
        }
        Selection::Leaf => {
            for c in n + 1..end {
                selected[idx(c)] = child_clusters[idx(c)].is_empty();
            }
        }
    }
    // Keep only the topmost selected cluster on every root path.
    let mut owner = vec![usize::MAX; m];
    for c in n + 1..end {
        let p = parent[idx(c)];
        let inherited = if p == root { usize::MAX } else { owner[idx(p)] };
        if inherited != usize::MAX {
            selected[idx(c)] = false;
            owner[idx(c)] = inherited;
        } else if selected[idx(c)] {
            owner[idx(c)] = c;
        }
    }

    let mut point_cluster = vec![usize::MAX; n];
    let mut point_lambda = vec![0f64; n];
    for e in &tree.edges {
        if e.child < n {
            point_lambda[e.child] = e.lambda_val;
            if e.parent != root {
                point_cluster[e.child] = owner[idx(e.parent)];
            }
        }
    }

    let mut sizes = vec![0usize; m];
    let mut max_lambda = vec![0f64; m];
    for p in 0..n {
        let c = point_cluster[p];
        if c != usize::MAX {
            sizes[idx(c)] += 1;
            max_lambda[idx(c)] = max_lambda[idx(c)].max(point_lambda[p]);
        }
    }
    let mut chosen: Vec<usize> = (n + 1..end).filter(|&c| selected[idx(c)]).collect();
    chosen.sort_by(|&a, &b| sizes[idx(b)].cmp(&sizes[idx(a)]).then(a.cmp(&b)));
    let mut final_label = vec![OUTLIER; m];
    for (l, &c) in chosen.iter().enumerate() {
        final_label[idx(c)] = l as i32;
    }

    let mut labels = vec![OUTLIER; n];
    let mut strength = vec![0f64; n];
    for p in 0..n {
        let c = point_cluster[p];
        if c == usize::MAX {
            continue;
        }
        labels[p] = final_label[idx(c)];
        let ml = max_lambda[idx(c)];
        strength[p] = if ml > 0.0 {
            (point_lambda[p] / ml).min(1.0)
        } else {
            1.0
        };
    }
    ClusterModel {
        labels,
        n_clusters: chosen.len(),
        stabilities: chosen.iter().map(|&c| raw_stability[idx(c)]).collect(),
        membership_strength: strength,
        condensed_tree: tree.clone(),
        params: params.clone(),
    }
}

/// Full HDBSCAN run on the rows of `y`.
pub fn hdbscan(y: &EmbeddingMatrix, params: &ClusterParams) -> Result<ClusterModel, ClusterError> {
    params.validate()?;
    let n = y.n();
    let min_samples = params.min_samples();
    if n < 2 || min_samples >= n {
        return Err(ClusterError::InsufficientData(format!(
            "{n} points cannot support min_samples = {min_samples}"
        )));
    }
    let core = core_distances(y, min_samples)?;
    let mst = build_mst(y, &core);
    let tree = condense_tree(&mst, params.min_cluster_size);
    Ok(extract(&tree, params, params.selection))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f32]) -> EmbeddingMatrix {
        let rows: Vec<[f32; 1]> = xs.iter().map(|&x| [x]).collect();
        EmbeddingMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn core_distances_on_a_line() {
        assert_eq!(
            core_distances(&line(&[0.0, 1.0, 2.0]), 1).unwrap(),
            vec![1.0, 1.0, 1.0]
        );
        let dup = line(&[3.0; 5]);
        assert_eq!(core_distances(&dup, 3).unwrap(), vec![0.0; 5]);
        assert!(matches!(
            core_distances(&dup, 5),
            Err(ClusterError::KTooLarge { k: 5, n: 5 })
        ));
    }

    #[test]
    fn mutual_reachability_examples() {
        assert_eq!(mutual_reachability(2.0, 1.0, 1.5), 2.0);
        assert_eq!(mutual_reachability(0.5, 3.0, 1.0), 3.0);
        assert_eq!(mutual_reachability(0.7, 0.0, 0.0), 0.7);
    }

    #[test]
    fn mst_three_points() {
        let y = line(&[0.0, 1.0, 5.0]);
        let core = core_distances(&y, 1).unwrap();
        let mst = build_mst(&y, &core);
        assert_eq!(
            mst,
            vec![
                MstEdge {
                    a: 0,
                    b: 1,
                    weight: 1.0
                },
                MstEdge {
                    a: 1,
                    b: 2,
                    weight: 4.0
                }
            ]
        );
        let two = line(&[0.0, 2.0]);
        let mst = build_mst(&two, &core_distances(&two, 1).unwrap());
        assert_eq!(mst.len(), 1);
        assert_eq!(mst[0].weight, 2.0);
    }

    #[test]
    fn oversized_min_cluster_size_leaves_root_only() {
        let y = line(&[0.0, 1.0, 2.5, 4.0, 7.0]);
        let mst = build_mst(&y, &core_distances(&y, 1).unwrap());
        let tree = condense_tree(&mst, 6);
        assert_eq!(tree.edges.len(), 5);
        assert!(tree.edges.iter().all(|e| e.parent == 5 && e.child < 5));
        let model = extract_clusters_eom(&tree, &ClusterParams::with_min_cluster_size(6));
        assert_eq!(model.n_clusters, 0);
        assert!(model.labels.iter().all(|&l| l == OUTLIER));
        assert!(model.membership_strength.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn equally_spaced_chain_has_no_split() {
        // With min_cluster_size = 4, every merge of a 10-point chain with
        // unit gaps is a tie; any split isolates fewer than 4 points on one
        // side somewhere, so no pair of children both reaches 4 at the top.
        let xs: Vec<f32> = (0..10).map(|i| i as f32).collect();
        let y = line(&xs);
        let mst = build_mst(&y, &core_distances(&y, 1).unwrap());
        let tree = condense_tree(&mst, 4);
        assert!(tree.root_children().is_empty());
        assert_eq!(tree.edges.len(), 10);
    }

    #[test]
    fn each_point_leaves_exactly_once() {
        let xs: Vec<f32> = (0..40)
            .map(|i| ((i * 37) % 17) as f32 + (i / 20) as f32 * 100.0)
            .collect();
        let y = line(&xs);
        let mst = build_mst(&y, &core_distances(&y, 2).unwrap());
        let tree = condense_tree(&mst, 5);
        let mut seen = [0; 40];
        for e in &tree.edges {
            if e.child < 40 {
                seen[e.child] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn insufficient_data() {
        let y = line(&[0.0, 1.0]);
        let err = hdbscan(&y, &ClusterParams::with_min_cluster_size(500)).unwrap_err();
        assert!(matches!(err, ClusterError::InsufficientData(_)));
    }
}
