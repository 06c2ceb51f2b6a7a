//! UMAP: fuzzy simplicial set construction over a k-NN graph, spectral
//! initialization, and negative-sampling SGD layout optimization.

use std::cell::Cell;
use std::sync::atomic::{AtomicU32, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::knn::{knn_graph, NeighborGraph};
use super::pca::subspace_iteration;
use super::{ReductionError, ReductionParams};
use crate::embedding::EmbeddingMatrix;

const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const SPECTRAL_MAX_ITER: usize = 500;
const SPECTRAL_TOL: f64 = 1e-6;
const GRADIENT_CLIP: f32 = 4.0;
const PARALLEL_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutInit {
    Spectral,
    Random,
}

#[derive(Debug, Clone)]
pub struct UmapOutput {
    pub embedding: EmbeddingMatrix,
    pub init: LayoutInit,
    pub a: f64,
    pub b: f64,
}

/// Symmetric fuzzy graph in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub weights: Vec<f32>,
}

impl FuzzyGraph {
    pub fn row(&self, i: usize) -> (&[u32], &[f32]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.weights[r])
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }
}

/// Per-point `rho` (distance to the nearest neighbor at positive distance)
/// and `sigma` such that `Σ_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(k)`.
pub fn smooth_knn_dist(graph: &NeighborGraph) -> (Vec<f64>, Vec<f64>) {
    let n = graph.n();
    let k = graph.k;
    let target = (k as f64).log2();
    let mean_all = {
        let total: f64 = (0..n)
            .flat_map(|i| graph.distances(i).iter().map(|d| f64::from(*d)))
            .sum();
        total / (n * k) as f64
    };
    (0..n)
        .into_par_iter()
        .map(|i| {
            let dists: Vec<f64> = graph.distances(i).iter().map(|d| f64::from(*d)).collect();
            let rho = dists.iter().copied().find(|d| *d > 0.0).unwrap_or(0.0);
            let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
            for _ in 0..64 {
                let psum: f64 = dists
                    .iter()
                    .map(|&d| {
                        let gap = d - rho;
                        if gap > 0.0 {
                            (-gap / mid).exp()
                        } else {
                            1.0
                        }
                    })
                    .sum();
                if (psum - target).abs() < SMOOTH_K_TOLERANCE {
                    break;
                }
                if psum > target {
                    hi = mid;
                    mid = (lo + hi) / 2.0;
                } else {
                    lo = mid;
                    mid = if hi.is_infinite() {
                        mid * 2.0
                    } else {
                        (lo + hi) / 2.0
                    };
                }
            }
            let mean_i = dists.iter().sum::<f64>() / k as f64;
            let floor = if rho > 0.0 { mean_i } else { mean_all };
            (rho, mid.max(MIN_K_DIST_SCALE * floor))
        })
        .unzip()
}

/// Directed memberships symmetrized by the fuzzy union `a + b - a·b`.
pub fn fuzzy_simplicial_set(graph: &NeighborGraph, rhos: &[f64], sigmas: &[f64]) -> FuzzyGraph {
    let n = graph.n();
    // (row, col, value, transposed?)
    let mut entries: Vec<(u32, u32, f64, bool)> = Vec::with_capacity(2 * n * graph.k);
    for i in 0..n {
        for (&j, &d) in graph.neighbors(i).iter().zip(graph.distances(i)) {
            let gap = f64::from(d) - rhos[i];
            let w = if gap <= 0.0 {
                1.0
            } else {
                (-gap / sigmas[i]).exp()
            };
            entries.push((i as u32, j, w, false));
            entries.push((j, i as u32, w, true));
        }
    }
    entries.par_sort_unstable_by(|x, y| (x.0, x.1, x.3).cmp(&(y.0, y.1, y.3)));

    let mut row_ptr = vec![0usize; n + 1];
    let mut cols = Vec::with_capacity(entries.len());
    let mut weights = Vec::with_capacity(entries.len());
    let mut idx = 0;
    while idx < entries.len() {
        let (r, c) = (entries[idx].0, entries[idx].1);
        let (mut a, mut b) = (0.0, 0.0);
        while idx < entries.len() && entries[idx].0 == r && entries[idx].1 == c {
            if entries[idx].3 {
                b = entries[idx].2;
            } else {
                a = entries[idx].2;
            }
            idx += 1;
        }
        let w = a + b - a * b;
        if w > 0.0 {
            cols.push(c);
            weights.push(w as f32);
            row_ptr[r as usize + 1] += 1;
        }
    }
    for i in 0..n {
        row_ptr[i + 1] += row_ptr[i];
    }
    FuzzyGraph {
        n,
        row_ptr,
        cols,
        weights,
    }
}

/// Least-squares fit of `1 / (1 + a·x^(2b))` to the offset exponential
/// membership curve defined by `min_dist` (spread 1), by Levenberg-Marquardt.
pub fn fit_curve(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let f = 1.0 / (1.0 + a * x.powf(2.0 * b));
                (f - y).powi(2)
            })
            .sum()
    };
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        // Normal equations J^T J δ = -J^T r
        let (mut jtj, mut jtr) = ([[0f64; 2]; 2], [0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let denom = 1.0 + a * p;
            let f = 1.0 / denom;
            let r = f - y;
            let da = -p / (denom * denom);
            let db = -a * p * 2.0 * x.ln() / (denom * denom);
            let g = [da, db];
            for u in 0..2 {
                jtr[u] += g[u] * r;
                for v in 0..2 {
                    jtj[u][v] += g[u] * g[v];
                }
            }
        }
        let m00 = jtj[0][0] * (1.0 + lambda);
        let m11 = jtj[1][1] * (1.0 + lambda);
        let m01 = jtj[0][1];
        let det = m00 * m11 - m01 * m01;
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = -(m11 * jtr[0] - m01 * jtr[1]) / det;
        let step_b = -(m00 * jtr[1] - m01 * jtr[0]) / det;
        let (na, nb) = (a + step_a, b + step_b);
        let new_cost = if na > 0.0 && nb > 0.0 {
            sse(na, nb)
        } else {
            f64::INFINITY
        };
        if new_cost < cost {
            let improvement = cost - new_cost;
            a = na;
            b = nb;
            cost = new_cost;
            lambda = (lambda / 10.0).max(1e-12);
            if improvement < 1e-15 * cost.max(1e-30) {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (a, b)
}

/// Eigenvectors of the symmetric normalized Laplacian for the smallest
/// nontrivial eigenvalues, or `None` when the solver does not converge.
fn spectral_layout(graph: &FuzzyGraph, dims: usize, seed: u64) -> Option<Vec<Vec<f64>>> {
    let n = graph.n;
    if n <= dims + 1 {
        return None;
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = graph.row(i).1.iter().map(|w| f64::from(*w)).sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    // Smallest eigenvalues of L = I - D^-1/2 W D^-1/2 are the largest of
    // (I + D^-1/2 W D^-1/2) / 2, which is positive semidefinite.
    let apply = |cols: &[Vec<f64>]| -> Vec<Vec<f64>> {
        cols.par_iter()
            .map(|x| {
                (0..n)
                    .map(|i| {
                        let (js, ws) = graph.row(i);
                        let mut acc = 0.0;
                        for (&j, &w) in js.iter().zip(ws) {
                            acc += f64::from(w) * inv_sqrt_deg[j as usize] * x[j as usize];
                        }
                        0.5 * (x[i] + inv_sqrt_deg[i] * acc)
                    })
                    .collect()
            })
            .collect()
    };
    let k = dims + 1;
    let (_, vectors, iterations, converged) =
        subspace_iteration(apply, n, k, k + 4, SPECTRAL_TOL, SPECTRAL_MAX_ITER, seed);
    if !converged {
        log::warn!(
            "spectral initialization did not converge in {iterations} iterations; using random layout"
        );
        return None;
    }
    Some(vectors.into_iter().skip(1).collect())
}

trait Store {
    fn get(&self, i: usize) -> f32;
    fn set(&self, i: usize, v: f32);
}

impl Store for [Cell<f32>] {
    #[inline]
    fn get(&self, i: usize) -> f32 {
        self[i].get()
    }

    #[inline]
    fn set(&self, i: usize, v: f32) {
        self[i].set(v);
    }
}

impl Store for [AtomicU32] {
    #[inline]
    fn get(&self, i: usize) -> f32 {
        f32::from_bits(self[i].load(Ordering::Relaxed))
    }

    #[inline]
    fn set(&self, i: usize, v: f32) {
        self[i].store(v.to_bits(), Ordering::Relaxed);
    }
}

struct Layout {
    heads: Vec<u32>,
    tails: Vec<u32>,
    epochs_per_sample: Vec<f64>,
    dims: usize,
    n: usize,
    a: f32,
    b: f32,
    negative_rate: f64,
}

struct EdgeState {
    next_sample: f64,
    next_negative: f64,
}

impl Layout {
    #[inline]
    fn clip(v: f32) -> f32 {
        v.clamp(-GRADIENT_CLIP, GRADIENT_CLIP)
    }

    #[inline]
    fn rdist<S: Store + ?Sized>(&self, s: &S, j: usize, k: usize) -> f32 {
        let mut acc = 0f32;
        for d in 0..self.dims {
            let diff = s.get(j * self.dims + d) - s.get(k * self.dims + d);
            acc += diff * diff;
        }
        acc
    }

    #[inline]
    fn process_edge<S: Store + ?Sized, R: Rng>(
        &self,
        s: &S,
        e: usize,
        state: &mut EdgeState,
        epoch: usize,
        alpha: f32,
        rng: &mut R,
    ) {
        if state.next_sample > epoch as f64 {
            return;
        }
        let (a, b, dims) = (self.a, self.b, self.dims);
        let j = self.heads[e] as usize;
        let k = self.tails[e] as usize;
        let d2 = self.rdist(s, j, k);
        let coeff = if d2 > 0.0 {
            -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
        } else {
            0.0
        };
        for d in 0..dims {
            let (cj, ck) = (s.get(j * dims + d), s.get(k * dims + d));
            let grad = Self::clip(coeff * (cj - ck)) * alpha;
            s.set(j * dims + d, cj + grad);
            s.set(k * dims + d, ck - grad);
        }
        let eps = self.epochs_per_sample[e];
        state.next_sample += eps;

        let eps_neg = eps / self.negative_rate;
        let n_neg = ((epoch as f64 - state.next_negative) / eps_neg).max(0.0) as usize;
        for _ in 0..n_neg {
            let k = rng.random_range(0..self.n);
            let d2 = self.rdist(s, j, k);
            let coeff = if d2 > 0.0 {
                2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
            } else if j == k {
                continue;
            } else {
                0.0
            };
            for d in 0..dims {
                let cj = s.get(j * dims + d);
                let grad = if coeff > 0.0 {
                    Self::clip(coeff * (cj - s.get(k * dims + d)))
                } else {
                    GRADIENT_CLIP
                };
                s.set(j * dims + d, cj + grad * alpha);
            }
        }
        state.next_negative += n_neg as f64 * eps_neg;
    }
}

fn optimize_layout(
    coords: &mut [f32],
    graph: &FuzzyGraph,
    a: f64,
    b: f64,
    params: &ReductionParams,
) {
    let n_epochs = params.n_epochs;
    if n_epochs == 0 || graph.nnz() == 0 {
        return;
    }
    let max_w = graph.weights.iter().copied().fold(0f32, f32::max);
    let cutoff = max_w / n_epochs as f32;
    let mut heads = Vec::new();
    let mut tails = Vec::new();
    let mut eps = Vec::new();
    for i in 0..graph.n {
        let (js, ws) = graph.row(i);
        for (&j, &w) in js.iter().zip(ws) {
            if w >= cutoff && w > 0.0 {
                heads.push(i as u32);
                tails.push(j);
                eps.push(f64::from(max_w) / f64::from(w));
            }
        }
    }
    let layout = Layout {
        heads,
        tails,
        epochs_per_sample: eps,
        dims: params.target_dims,
        n: graph.n,
        a: a as f32,
        b: b as f32,
        negative_rate: params.negative_samples.max(1) as f64,
    };
    let mut states: Vec<EdgeState> = layout
        .epochs_per_sample
        .iter()
        .map(|&e| EdgeState {
            next_sample: e,
            next_negative: e / layout.negative_rate,
        })
        .collect();

    if params.serial {
        let cells = Cell::from_mut(coords).as_slice_of_cells();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5a5a_5a5a);
        for epoch in 0..n_epochs {
            let alpha = 1.0 - epoch as f32 / n_epochs as f32;
            for (e, state) in states.iter_mut().enumerate() {
                layout.process_edge(cells, e, state, epoch, alpha, &mut rng);
            }
        }
    } else {
        let atomics: Vec<AtomicU32> = coords.iter().map(|v| AtomicU32::new(v.to_bits())).collect();
        for epoch in 0..n_epochs {
            let alpha = 1.0 - epoch as f32 / n_epochs as f32;
            states
                .par_chunks_mut(PARALLEL_CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(params.seed ^ ((epoch as u64) << 32) ^ c as u64);
                    for (off, state) in chunk.iter_mut().enumerate() {
                        let e = c * PARALLEL_CHUNK + off;
                        layout.process_edge(&atomics[..], e, state, epoch, alpha, &mut rng);
                    }
                });
        }
        for (c, a) in coords.iter_mut().zip(&atomics) {
            *c = f32::from_bits(a.load(Ordering::Relaxed));
        }
    }
}

/// Rescales every column to `[0, 10]`.
fn rescale_columns(coords: &mut [f32], n: usize, dims: usize) {
    for d in 0..dims {
        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for i in 0..n {
            lo = lo.min(coords[i * dims + d]);
            hi = hi.max(coords[i * dims + d]);
        }
        let span = if hi > lo { hi - lo } else { 1.0 };
        for i in 0..n {
            coords[i * dims + d] = 10.0 * (coords[i * dims + d] - lo) / span;
        }
    }
}

pub fn umap_reduce(
    x: &EmbeddingMatrix,
    params: &ReductionParams,
) -> Result<UmapOutput, ReductionError> {
    params.validate(x.d())?;
    let n = x.n();
    if n <= params.n_neighbors {
        return Err(ReductionError::TooFewPoints {
            n,
            n_neighbors: params.n_neighbors,
        });
    }
    let dims = params.target_dims;
    let graph = knn_graph(
        x,
        params.n_neighbors,
        params.input_metric,
        params.knn_mode,
        params.seed,
    )?;
    let (rhos, sigmas) = smooth_knn_dist(&graph);
    let fuzzy = fuzzy_simplicial_set(&graph, &rhos, &sigmas);
    let (a, b) = fit_curve(params.min_dist, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut coords = vec![0f32; n * dims];
    let init = match spectral_layout(&fuzzy, dims, params.seed) {
        Some(vectors) => {
            let max_abs = vectors
                .iter()
                .flat_map(|v| v.iter())
                .fold(0f64, |m, v| m.max(v.abs()))
                .max(1e-300);
            let expansion = 10.0 / max_abs;
            let noise = Normal::new(0.0, 1e-4).expect("valid normal");
            for i in 0..n {
                for (d, v) in vectors.iter().enumerate() {
                    coords[i * dims + d] = (v[i] * expansion + noise.sample(&mut rng)) as f32;
                }
            }
            LayoutInit::Spectral
        }
        None => {
            for c in &mut coords {
                *c = rng.random_range(-10.0..10.0);
            }
            LayoutInit::Random
        }
    };
    rescale_columns(&mut coords, n, dims);
    optimize_layout(&mut coords, &fuzzy, a, b, params);
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(ReductionError::DegenerateInput(
            "layout optimization produced non-finite coordinates".into(),
        ));
    }
    Ok(UmapOutput {
        embedding: EmbeddingMatrix::new(n, dims, coords)?,
        init,
        a,
        b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::{KnnMode, Metric};

    #[test]
    fn curve_fit_beats_grid() {
        let (a, b) = fit_curve(0.1, 1.0);
        let xs: Vec<f64> = (0..300).map(|i| 3.0 * i as f64 / 299.0).collect();
        let sse = |a: f64, b: f64| -> f64 {
            xs.iter()
                .map(|&x| {
                    let y = if x < 0.1 { 1.0 } else { (-(x - 0.1)).exp() };
                    (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2)
                })
                .sum()
        };
        let fitted = sse(a, b);
        let mut grid_best = f64::INFINITY;
        for ia in 1..=300 {
            for ib in 1..=200 {
                grid_best = grid_best.min(sse(ia as f64 * 0.01, ib as f64 * 0.01));
            }
        }
        assert!(
            fitted <= grid_best + 1e-9,
            "fit {fitted} vs grid {grid_best}"
        );
        assert!(
            (1.0..2.5).contains(&a) && (0.5..1.2).contains(&b),
            "a={a} b={b}"
        );
    }

    #[test]
    fn sigma_solves_membership_sum() {
        let rows: Vec<[f32; 2]> = (0..40)
            .map(|i| {
                let t = i as f32;
                [t.sin() * t, (t * 0.3).cos() * 5.0]
            })
            .collect();
        let x = EmbeddingMatrix::from_rows(&rows).unwrap();
        let g = knn_graph(&x, 6, Metric::Euclidean, KnnMode::Exact, 0).unwrap();
        let (rhos, sigmas) = smooth_knn_dist(&g);
        for i in 0..40 {
            let s: f64 = g
                .distances(i)
                .iter()
                .map(|&d| (-(f64::from(d) - rhos[i]).max(0.0) / sigmas[i]).exp())
                .sum();
            assert!((s - 6f64.log2()).abs() < 1e-4, "row {i}: {s}");
        }
    }

    #[test]
    fn fuzzy_union_is_symmetric() {
        let rows: Vec<[f32; 3]> = (0..30)
            .map(|i| {
                let t = i as f32 * 0.7;
                [t.cos(), t.sin(), (t * 0.2).sin()]
            })
            .collect();
        let x = EmbeddingMatrix::from_rows(&rows).unwrap();
        let g = knn_graph(&x, 5, Metric::Euclidean, KnnMode::Exact, 0).unwrap();
        let (rhos, sigmas) = smooth_knn_dist(&g);
        let f = fuzzy_simplicial_set(&g, &rhos, &sigmas);
        let lookup = |i: usize, j: u32| {
            let (js, ws) = f.row(i);
            js.iter().position(|&c| c == j).map(|p| ws[p])
        };
        for i in 0..30 {
            let (js, ws) = f.row(i);
            for (&j, &w) in js.iter().zip(ws) {
                assert!(w > 0.0 && w <= 1.0);
                assert_eq!(lookup(j as usize, i as u32), Some(w));
            }
        }
    }

    #[test]
    fn too_few_points() {
        let x = EmbeddingMatrix::zeros(10, 20);
        let err = umap_reduce(&x, &ReductionParams::default()).unwrap_err();
        assert!(matches!(
            err,
            ReductionError::TooFewPoints {
                n: 10,
                n_neighbors: 15
            }
        ));
    }
}
