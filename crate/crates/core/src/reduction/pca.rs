//! Principal component analysis by block subspace iteration on the
//! covariance matrix, with Rayleigh-Ritz refinement each step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ReductionError;
use crate::embedding::EmbeddingMatrix;

const EIGENVALUE_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 5_000;
const OVERSAMPLE: usize = 8;
const ROW_CHUNK: usize = 1024;

#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Principal axes, one unit vector of length `d` per component.
    pub components: Vec<Vec<f64>>,
    /// Variance along each axis, descending.
    pub eigenvalues: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl PcaModel {
    /// Projections of every row onto the principal axes, in 64-bit.
    pub fn project_f64(&self, x: &EmbeddingMatrix) -> Vec<Vec<f64>> {
        x.rows()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|row| {
                self.components
                    .iter()
                    .map(|c| {
                        row.iter()
                            .zip(&self.mean)
                            .zip(c)
                            .map(|((v, m), w)| (f64::from(*v) - m) * w)
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn project(&self, x: &EmbeddingMatrix) -> EmbeddingMatrix {
        EmbeddingMatrix::from_f64_rows(&self.project_f64(x))
            .expect("projection of finite data is finite")
    }
}

/// Sample covariance (`d × d`, row-major), accumulated over fixed row chunks
/// so the sum order does not depend on the thread count.
fn covariance(x: &EmbeddingMatrix, mean: &[f64]) -> Vec<f64> {
    let d = x.d();
    let n = x.n();
    let partials: Vec<Vec<f64>> = (0..n.div_ceil(ROW_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0f64; d * d];
            let mut centered = vec![0f64; d];
            for i in c * ROW_CHUNK..((c + 1) * ROW_CHUNK).min(n) {
                for (t, v) in x.row(i).iter().enumerate() {
                    centered[t] = f64::from(*v) - mean[t];
                }
                for a in 0..d {
                    let ca = centered[a];
                    if ca == 0.0 {
                        continue;
                    }
                    let row = &mut acc[a * d..(a + 1) * d];
                    for b in a..d {
                        row[b] += ca * centered[b];
                    }
                }
            }
            acc
        })
        .collect();
    let mut cov = vec![0f64; d * d];
    for p in partials {
        for (c, v) in cov.iter_mut().zip(p) {
            *c += v;
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] / denom;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    cov
}

/// `y = A q` for a dense symmetric `d × d` matrix and a set of column vectors.
fn multiply(a: &[f64], d: usize, cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    cols.par_iter()
        .map(|q| {
            (0..d)
                .map(|r| {
                    a[r * d..(r + 1) * d]
                        .iter()
                        .zip(q)
                        .map(|(x, y)| x * y)
                        .sum()
                })
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Modified Gram-Schmidt, run twice for stability. Columns that collapse are
/// replaced by a unit vector orthogonal to the previous ones.
pub(crate) fn orthonormalize(cols: &mut [Vec<f64>]) {
    let d = cols.first().map_or(0, Vec::len);
    for i in 0..cols.len() {
        for _ in 0..2 {
            for j in 0..i {
                let (head, tail) = cols.split_at_mut(i);
                let p = dot(&tail[0], &head[j]);
                for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= p * y;
                }
            }
        }
        let norm = dot(&cols[i], &cols[i]).sqrt();
        if norm > 1e-300 && norm.is_finite() {
            cols[i].iter_mut().for_each(|v| *v /= norm);
            continue;
        }
        // Rank deficiency: pick the canonical axis least covered so far.
        let mut best = (f64::INFINITY, 0);
        for axis in 0..d {
            let covered: f64 = cols[..i].iter().map(|c| c[axis] * c[axis]).sum();
            if covered < best.0 {
                best = (covered, axis);
            }
        }
        let mut e = vec![0f64; d];
        e[best.1] = 1.0;
        cols[i] = e;
        for _ in 0..2 {
            for j in 0..i {
                let (head, tail) = cols.split_at_mut(i);
                let p = dot(&tail[0], &head[j]);
                for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= p * y;
                }
            }
        }
        let norm = dot(&cols[i], &cols[i]).sqrt();
        cols[i].iter_mut().for_each(|v| *v /= norm);
    }
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Returns eigenvalues (descending) and matching eigenvectors.
pub(crate) fn symmetric_eigen(mut a: Vec<f64>, m: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut v = vec![0f64; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * m + j] * a[i * m + j])
            .sum();
        let scale: f64 = (0..m).map(|i| a[i * m + i] * a[i * m + i]).sum::<f64>();
        if off <= 1e-30 * scale.max(1e-300) || off == 0.0 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| a[j * m + j].total_cmp(&a[i * m + i]));
    let values = order.iter().map(|&i| a[i * m + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..m).map(|k| v[k * m + i]).collect())
        .collect();
    (values, vectors)
}

/// Top `k` eigenpairs of the symmetric operator `apply` on `d`-vectors, by
/// subspace iteration with Rayleigh-Ritz. Stops when no Ritz value moves by
/// more than `tol` (relative to the largest) or after `max_iter` rounds.
pub(crate) fn subspace_iteration<F>(
    apply: F,
    d: usize,
    k: usize,
    block: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> (Vec<f64>, Vec<Vec<f64>>, usize, bool)
where
    F: Fn(&[Vec<f64>]) -> Vec<Vec<f64>>,
{
    let block = block.clamp(k, d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..d).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    orthonormalize(&mut q);
    let mut prev: Option<Vec<f64>> = None;
    let mut values = Vec::new();
    for it in 1..=max_iter {
        let mut z = apply(&q);
        orthonormalize(&mut z);
        let az = apply(&z);
        let mut t = vec![0f64; block * block];
        for i in 0..block {
            for j in i..block {
                let v = dot(&z[i], &az[j]);
                t[i * block + j] = v;
                t[j * block + i] = v;
            }
        }
        let (vals, vecs) = symmetric_eigen(t, block);
        q = vecs
            .iter()
            .map(|w| {
                let mut col = vec![0f64; d];
                for (zi, wi) in z.iter().zip(w) {
                    for (c, x) in col.iter_mut().zip(zi) {
                        *c += wi * x;
                    }
                }
                col
            })
            .collect();
        values = vals;
        let scale = values.iter().fold(0f64, |m, v| m.max(v.abs())).max(1e-300);
        if let Some(p) = &prev {
            let change = values[..k]
                .iter()
                .zip(p)
                .map(|(a, b)| (a - b).abs())
                .fold(0f64, f64::max);
            if change <= tol * scale {
                q.truncate(k);
                values.truncate(k);
                return (values, q, it, true);
            }
        }
        prev = Some(values[..k].to_vec());
        if block == d {
            // Full basis: Rayleigh-Ritz is already exact.
            q.truncate(k);
            values.truncate(k);
            return (values, q, it, true);
        }
    }
    q.truncate(k);
    values.truncate(k);
    (values, q, max_iter, false)
}

pub fn pca_fit(x: &EmbeddingMatrix, target_dims: usize) -> Result<PcaModel, ReductionError> {
    let (n, d) = (x.n(), x.d());
    if n < 2 {
        return Err(ReductionError::DegenerateInput(format!(
            "PCA needs n >= 2, got {n}"
        )));
    }
    if target_dims == 0 || target_dims > n.min(d) {
        return Err(ReductionError::InvalidParams(format!(
            "target_dims {target_dims} must be in 1..={}",
            n.min(d)
        )));
    }
    let mut mean = vec![0f64; d];
    for row in x.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += f64::from(*v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let cov = covariance(x, &mean);

    let (eigenvalues, mut components, iterations, converged) = subspace_iteration(
        |cols| multiply(&cov, d, cols),
        d,
        target_dims,
        target_dims + OVERSAMPLE,
        EIGENVALUE_TOL,
        MAX_ITERATIONS,
        0x5eed,
    );
    if !converged {
        log::warn!("PCA subspace iteration stopped after {iterations} rounds without converging");
    }
    for c in &mut components {
        let mut pivot = 0;
        for (t, v) in c.iter().enumerate() {
            if v.abs() > c[pivot].abs() {
                pivot = t;
            }
        }
        if c[pivot] < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
        iterations,
        converged,
    })
}

/// Projects mean-centered data onto its top `target_dims` principal axes.
pub fn pca_reduce(
    x: &EmbeddingMatrix,
    target_dims: usize,
) -> Result<EmbeddingMatrix, ReductionError> {
    Ok(pca_fit(x, target_dims)?.project(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_degenerate() {
        let x = EmbeddingMatrix::zeros(1, 4);
        assert!(matches!(
            pca_reduce(&x, 2),
            Err(ReductionError::DegenerateInput(_))
        ));
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = vec![4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let (vals, vecs) = symmetric_eigen(a.clone(), 3);
        for (lambda, v) in vals.iter().zip(&vecs) {
            for r in 0..3 {
                let av: f64 = (0..3).map(|c| a[r * 3 + c] * v[c]).sum();
                assert!((av - lambda * v[r]).abs() < 1e-12);
            }
        }
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn axis_signs_are_fixed() {
        let rows: Vec<[f32; 3]> = (0..20)
            .map(|i| {
                let t = i as f32;
                [t, -2.0 * t + 0.1 * (t * 1.7).sin(), 0.3 * (t * 0.9).cos()]
            })
            .collect();
        let x = EmbeddingMatrix::from_rows(&rows).unwrap();
        let m = pca_fit(&x, 2).unwrap();
        for c in &m.components {
            let pivot = c
                .iter()
                .copied()
                .fold(0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(pivot > 0.0);
        }
    }
}
