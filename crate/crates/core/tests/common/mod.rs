//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use aidtopics::EmbeddingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Isotropic Gaussian blobs with unit variance. Blob `c` is centered at
/// `spacing` along axis `c` (axes wrap when there are more blobs than dims).
pub fn axis_blobs(
    sizes: &[usize],
    dims: usize,
    spacing: f64,
    seed: u64,
) -> (EmbeddingMatrix, Vec<usize>) {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, &size) in sizes.iter().enumerate() {
        let mut center = vec![0.0; dims];
        center[c % dims] += spacing;
        if c >= dims {
            center[(c + 1) % dims] += spacing;
        }
        for _ in 0..size {
            rows.push(
                center
                    .iter()
                    .map(|m| (m + normal.sample(&mut r)) as f32)
                    .collect::<Vec<f32>>(),
            );
            labels.push(c);
        }
    }
    (EmbeddingMatrix::from_rows(&rows).unwrap(), labels)
}

/// Appends `count` points drawn uniformly from `[lo, hi]^d`; returns their
/// row indices.
pub fn add_uniform_noise(
    x: &EmbeddingMatrix,
    count: usize,
    lo: f64,
    hi: f64,
    seed: u64,
) -> (EmbeddingMatrix, Vec<usize>) {
    let mut r = rng(seed);
    let mut rows: Vec<Vec<f32>> = x.rows().map(|row| row.to_vec()).collect();
    let start = rows.len();
    for _ in 0..count {
        rows.push((0..x.d()).map(|_| r.random_range(lo..hi) as f32).collect());
    }
    (
        EmbeddingMatrix::from_rows(&rows).unwrap(),
        (start..start + count).collect(),
    )
}

pub fn as_i32(labels: &[usize]) -> Vec<i32> {
    labels.iter().map(|&l| l as i32).collect()
}

/// Random instance with every one of `k` labels used at least once.
pub fn fuzz_instance(
    r: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    k: usize,
) -> (EmbeddingMatrix, Vec<i32>) {
    let scale = r.random_range(0.5..20.0);
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| (r.random_range(-1.0..1.0) * scale) as f32)
                .collect()
        })
        .collect();
    let mut labels: Vec<i32> = (0..n)
        .map(|i| {
            if i < k {
                i as i32
            } else {
                r.random_range(0..k as i32)
            }
        })
        .collect();
    for i in (1..n).rev() {
        labels.swap(i, r.random_range(0..=i));
    }
    (EmbeddingMatrix::from_rows(&rows).unwrap(), labels)
}

pub fn rows_f64(x: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    x.rows()
        .map(|r| r.iter().map(|&v| f64::from(v)).collect())
        .collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn groups(labels: &[i32]) -> Vec<(i32, Vec<usize>)> {
    let mut ids: Vec<i32> = labels.iter().copied().filter(|&l| l >= 0).collect();
    ids.sort();
    ids.dedup();
    ids.into_iter()
        .map(|c| (c, (0..labels.len()).filter(|&i| labels[i] == c).collect()))
        .collect()
}

fn centroid(p: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let d = p[0].len();
    let mut c = vec![0.0; d];
    for &i in members {
        for k in 0..d {
            c[k] += p[i][k];
        }
    }
    c.iter().map(|v| v / members.len() as f64).collect()
}

/// Direct double loop over all pairs. Noise (−1) is dropped.
pub fn oracle_silhouette(x: &EmbeddingMatrix, labels: &[i32]) -> (f64, f64) {
    let p = rows_f64(x);
    let g = groups(labels);
    let mut per_cluster = Vec::new();
    let mut all = Vec::new();
    for (c, members) in &g {
        let mut scores = Vec::new();
        for &i in members {
            if members.len() == 1 {
                scores.push(0.0);
                continue;
            }
            let a: f64 = members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| dist(&p[i], &p[j]))
                .sum::<f64>()
                / (members.len() - 1) as f64;
            let b = g
                .iter()
                .filter(|(o, _)| o != c)
                .map(|(_, other)| {
                    other.iter().map(|&j| dist(&p[i], &p[j])).sum::<f64>() / other.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            scores.push(if m == 0.0 { 0.0 } else { (b - a) / m });
        }
        per_cluster.push(scores.iter().sum::<f64>() / scores.len() as f64);
        all.extend(scores);
    }
    (
        per_cluster.iter().sum::<f64>() / per_cluster.len() as f64,
        all.iter().sum::<f64>() / all.len() as f64,
    )
}

pub fn oracle_davies_bouldin(x: &EmbeddingMatrix, labels: &[i32]) -> f64 {
    let p = rows_f64(x);
    let g = groups(labels);
    let cents: Vec<Vec<f64>> = g.iter().map(|(_, m)| centroid(&p, m)).collect();
    let diam: Vec<f64> = g
        .iter()
        .zip(&cents)
        .map(|((_, m), c)| m.iter().map(|&i| dist(&p[i], c)).sum::<f64>() / m.len() as f64)
        .collect();
    let k = g.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..k {
            if i != j {
                worst = worst.max((diam[i] + diam[j]) / dist(&cents[i], &cents[j]));
            }
        }
        total += worst;
    }
    total / k as f64
}

pub fn oracle_calinski_harabasz(x: &EmbeddingMatrix, labels: &[i32]) -> f64 {
    let p = rows_f64(x);
    let g = groups(labels);
    let kept: Vec<usize> = g.iter().flat_map(|(_, m)| m.iter().copied()).collect();
    let overall = centroid(&p, &kept);
    let mut between = 0.0;
    let mut within = 0.0;
    for (_, m) in &g {
        let c = centroid(&p, m);
        between += m.len() as f64 * dist(&c, &overall).powi(2);
        within += m.iter().map(|&i| dist(&p[i], &c).powi(2)).sum::<f64>();
    }
    let n = kept.len() as f64;
    let k = g.len() as f64;
    between / within * (n - k) / (k - 1.0)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || a == b
}

/// Merge heights of naive agglomerative single linkage (closest pair of
/// clusters merged each round).
pub fn oracle_single_linkage(x: &EmbeddingMatrix) -> Vec<f64> {
    let p = rows_f64(x);
    let n = p.len();
    let mut cluster: Vec<usize> = (0..n).collect();
    let mut heights = Vec::new();
    for _ in 1..n {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            for j in i + 1..n {
                if cluster[i] != cluster[j] {
                    let d = dist(&p[i], &p[j]);
                    if d < best.0 {
                        best = (d, cluster[i], cluster[j]);
                    }
                }
            }
        }
        heights.push(best.0);
        for c in cluster.iter_mut() {
            if *c == best.2 {
                *c = best.1;
            }
        }
    }
    heights
}

/// Exact k nearest neighbors (self excluded) by sorting all distances.
pub fn brute_knn(x: &EmbeddingMatrix, k: usize) -> Vec<Vec<usize>> {
    let p = rows_f64(x);
    (0..p.len())
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..p.len())
                .filter(|&j| j != i)
                .map(|j| (dist(&p[i], &p[j]), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Fraction of each point's k nearest neighbors carrying its own label,
/// averaged over points, plus the worst single point.
pub fn blob_purity(x: &EmbeddingMatrix, labels: &[usize], k: usize) -> (f64, f64) {
    let nn = brute_knn(x, k);
    let per_point: Vec<f64> = nn
        .iter()
        .enumerate()
        .map(|(i, js)| js.iter().filter(|&&j| labels[j] == labels[i]).count() as f64 / k as f64)
        .collect();
    (
        per_point.iter().sum::<f64>() / per_point.len() as f64,
        per_point.iter().copied().fold(1.0, f64::min),
    )
}
