//! Cluster validity indices: silhouette (macro and micro averages),
//! Davies-Bouldin and Calinski-Harabasz, all with euclidean distance.
//!
//! These indices reward convex, well-separated groups, so they tend to read
//! lower for density-based clusterings than for centroid methods. Every
//! [`MetricsReport`] therefore records whether noise was excluded and which
//! vector space the scores were computed in.
//!
//! Accumulations run over fixed-size point chunks whose partial sums are
//! combined in chunk order, so results do not depend on the thread count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::OUTLIER;
use crate::distance::euclidean;
use crate::embedding::EmbeddingMatrix;

const CHUNK: usize = 4096;

/// Above this many retained points, [`compute_metrics`] samples the
/// silhouette unless told otherwise.
pub const AUTO_SAMPLE_THRESHOLD: usize = 100_000;
pub const AUTO_SAMPLE_SIZE: usize = 50_000;

#[derive(Debug, Error, PartialEq)]
pub enum ValidityError {
    #[error("at least two clusters are required, found {k}")]
    DegenerateClusterCount { k: usize },
    #[error("clusters {a} and {b} have coincident centroids")]
    CoincidentCentroids { a: i32, b: i32 },
    #[error("within-cluster dispersion is zero")]
    ZeroWithinDispersion,
    #[error("{labels} labels for {points} points")]
    LengthMismatch { points: usize, labels: usize },
    #[error("invalid sample size {sample_size}: {reason}")]
    InvalidSample { sample_size: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    #[default]
    Reduced,
    Original,
}

impl std::str::FromStr for Space {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reduced" => Ok(Self::Reduced),
            "original" => Ok(Self::Original),
            other => Err(format!("unknown metric space `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Silhouette {
    /// Mean over clusters of the per-cluster mean s(i).
    pub macro_avg: f64,
    /// Mean s(i) over all evaluated points.
    pub micro_avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub silhouette_macro: f64,
    pub silhouette_micro: f64,
    pub davies_bouldin: f64,
    /// `+inf` when every cluster has zero within-cluster dispersion; written
    /// to JSON as the string `"Infinity"`.
    #[serde(with = "maybe_infinite")]
    pub calinski_harabasz: f64,
    /// Points the indices were computed over (after noise exclusion).
    pub n_points: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub noise_excluded: bool,
    pub space: Space,
    pub sample_size: Option<usize>,
    pub seed: Option<u64>,
}

mod maybe_infinite {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("Infinity")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "Infinity" || t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(de::Error::custom(format!("unexpected value `{t}`"))),
        }
    }
}

/// How [`compute_metrics`] treats noise, space and sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    /// Treat label −1 as one more cluster instead of dropping those points.
    pub include_noise: bool,
    pub space: Space,
    /// Silhouette sample size; `None` picks exact or the automatic sample.
    pub sample_size: Option<usize>,
    /// Never sample, whatever the size.
    pub exact: bool,
    pub seed: u64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            include_noise: false,
            space: Space::Reduced,
            sample_size: None,
            exact: false,
            seed: 0,
        }
    }
}

/// Points and labels after noise handling, with labels mapped to `0..k`.
struct Partition {
    points: Vec<usize>,
    dense: Vec<usize>,
    /// Original label of each dense id, ascending.
    original: Vec<i32>,
}

impl Partition {
    fn new(n: usize, labels: &[i32], include_noise: bool) -> Result<Self, ValidityError> {
        if labels.len() != n {
            return Err(ValidityError::LengthMismatch {
                points: n,
                labels: labels.len(),
            });
        }
        let mut ids = BTreeMap::new();
        for &l in labels {
            if include_noise || l != OUTLIER {
                ids.insert(l, 0usize);
            }
        }
        for (i, v) in ids.values_mut().enumerate() {
            *v = i;
        }
        let mut points = Vec::with_capacity(n);
        let mut dense = Vec::with_capacity(n);
        for (i, l) in labels.iter().enumerate() {
            if let Some(&d) = ids.get(l) {
                points.push(i);
                dense.push(d);
            }
        }
        Ok(Self {
            points,
            dense,
            original: ids.into_keys().collect(),
        })
    }

    fn k(&self) -> usize {
        self.original.len()
    }

    fn require_two(&self) -> Result<(), ValidityError> {
        if self.k() < 2 {
            return Err(ValidityError::DegenerateClusterCount { k: self.k() });
        }
        Ok(())
    }

    fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k()];
        for &c in &self.dense {
            s[c] += 1;
        }
        s
    }
}

/// Per-cluster coordinate sums and counts, chunk-ordered.
fn cluster_sums(x: &EmbeddingMatrix, part: &Partition) -> (Vec<Vec<f64>>, Vec<usize>) {
    let (k, d) = (part.k(), x.d());
    let partials: Vec<Vec<Vec<f64>>> = part
        .points
        .par_chunks(CHUNK)
        .zip(part.dense.par_chunks(CHUNK))
        .map(|(pts, cls)| {
            let mut sums = vec![vec![0f64; d]; k];
            for (&p, &c) in pts.iter().zip(cls) {
                for (s, &v) in sums[c].iter_mut().zip(x.row(p)) {
                    *s += f64::from(v);
                }
            }
            sums
        })
        .collect();
    let mut sums = vec![vec![0f64; d]; k];
    for partial in partials {
        for (acc, p) in sums.iter_mut().zip(partial) {
            for (a, v) in acc.iter_mut().zip(p) {
                *a += v;
            }
        }
    }
    (sums, part.sizes())
}

fn centroids(x: &EmbeddingMatrix, part: &Partition) -> (Vec<Vec<f64>>, Vec<usize>) {
    let (mut sums, sizes) = cluster_sums(x, part);
    for (s, &n) in sums.iter_mut().zip(&sizes) {
        for v in s.iter_mut() {
            *v /= n as f64;
        }
    }
    (sums, sizes)
}

fn dist_to(p: &[f32], c: &[f64]) -> f64 {
    p.iter()
        .zip(c)
        .map(|(&a, &b)| {
            let d = f64::from(a) - b;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Per-cluster sums of `f(point, own centroid)`, chunk-ordered.
fn per_cluster_sum(
    x: &EmbeddingMatrix,
    part: &Partition,
    cents: &[Vec<f64>],
    f: impl Fn(&[f32], &[f64]) -> f64 + Sync,
) -> Vec<f64> {
    let k = part.k();
    let partials: Vec<Vec<f64>> = part
        .points
        .par_chunks(CHUNK)
        .zip(part.dense.par_chunks(CHUNK))
        .map(|(pts, cls)| {
            let mut acc = vec![0f64; k];
            for (&p, &c) in pts.iter().zip(cls) {
                acc[c] += f(x.row(p), &cents[c]);
            }
            acc
        })
        .collect();
    let mut total = vec![0f64; k];
    for partial in partials {
        for (t, v) in total.iter_mut().zip(partial) {
            *t += v;
        }
    }
    total
}

/// s(i) for each position in `eval` (positions into the partition).
fn silhouette_values(
    x: &EmbeddingMatrix,
    part: &Partition,
    sizes: &[usize],
    eval: &[usize],
) -> Vec<f64> {
    let k = part.k();
    eval.par_iter()
        .map(|&pos| {
            let own = part.dense[pos];
            if sizes[own] <= 1 {
                return 0.0;
            }
            let xi = x.row(part.points[pos]);
            let mut sums = vec![0f64; k];
            for (&q, &c) in part.points.iter().zip(&part.dense) {
                sums[c] += euclidean(xi, x.row(q));
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect()
}

fn silhouette_over(x: &EmbeddingMatrix, part: &Partition, eval: &[usize]) -> Silhouette {
    let sizes = part.sizes();
    let s = silhouette_values(x, part, &sizes, eval);
    let k = part.k();
    let mut cluster_sum = vec![0f64; k];
    let mut cluster_n = vec![0usize; k];
    let mut total = 0f64;
    for (&pos, &v) in eval.iter().zip(&s) {
        let c = part.dense[pos];
        cluster_sum[c] += v;
        cluster_n[c] += 1;
        total += v;
    }
    let present: Vec<usize> = (0..k).filter(|&c| cluster_n[c] > 0).collect();
    let macro_avg = present
        .iter()
        .map(|&c| cluster_sum[c] / cluster_n[c] as f64)
        .sum::<f64>()
        / present.len() as f64;
    Silhouette {
        macro_avg,
        micro_avg: total / eval.len() as f64,
    }
}

/// Exact silhouette over all non-noise points.
pub fn silhouette(x: &EmbeddingMatrix, labels: &[i32]) -> Result<Silhouette, ValidityError> {
    silhouette_with(x, labels, false)
}

pub fn silhouette_with(
    x: &EmbeddingMatrix,
    labels: &[i32],
    include_noise: bool,
) -> Result<Silhouette, ValidityError> {
    let part = Partition::new(x.n(), labels, include_noise)?;
    part.require_two()?;
    let all: Vec<usize> = (0..part.points.len()).collect();
    Ok(silhouette_over(x, &part, &all))
}

/// Stratified sample of partition positions: per-cluster quotas by largest
/// remainder with at least one point per cluster, members drawn without
/// replacement. Returned positions are sorted.
fn stratified_sample(
    part: &Partition,
    sample_size: usize,
    seed: u64,
) -> Result<Vec<usize>, ValidityError> {
    let n = part.points.len();
    let k = part.k();
    let invalid = |reason: &str| ValidityError::InvalidSample {
        sample_size,
        reason: reason.into(),
    };
    if sample_size > n {
        return Err(invalid("larger than the number of points"));
    }
    if sample_size < k {
        return Err(invalid("smaller than the number of clusters"));
    }
    let sizes = part.sizes();
    let exact: Vec<f64> = sizes
        .iter()
        .map(|&s| sample_size as f64 * s as f64 / n as f64)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|&q| (q.floor() as usize).max(1)).collect();
    let mut assigned: usize = quota.iter().sum();
    let mut by_remainder: Vec<usize> = (0..k).collect();
    by_remainder.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut cursor = 0;
    while assigned < sample_size {
        let c = by_remainder[cursor % k];
        if quota[c] < sizes[c] {
            quota[c] += 1;
            assigned += 1;
        }
        cursor += 1;
    }
    while assigned > sample_size {
        // Forced minimums overshot; trim the largest quotas.
        let c = (0..k)
            .filter(|&c| quota[c] > 1)
            .max_by(|&a, &b| quota[a].cmp(&quota[b]).then(b.cmp(&a)))
            .expect("sample_size >= k");
        quota[c] -= 1;
        assigned -= 1;
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, &c) in part.dense.iter().enumerate() {
        members[c].push(pos);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(sample_size);
    for (c, m) in members.iter_mut().enumerate() {
        let q = quota[c];
        if q == m.len() {
            chosen.extend_from_slice(m);
            continue;
        }
        for i in 0..q {
            let j = rng.random_range(i..m.len());
            m.swap(i, j);
        }
        chosen.extend_from_slice(&m[..q]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Silhouette averaged over a stratified sample; each sampled s(i) is still
/// computed against the full cluster populations.
pub fn sampled_silhouette(
    x: &EmbeddingMatrix,
    labels: &[i32],
    sample_size: usize,
    seed: u64,
) -> Result<Silhouette, ValidityError> {
    let part = Partition::new(x.n(), labels, false)?;
    part.require_two()?;
    let eval = stratified_sample(&part, sample_size, seed)?;
    Ok(silhouette_over(x, &part, &eval))
}

pub fn davies_bouldin(x: &EmbeddingMatrix, labels: &[i32]) -> Result<f64, ValidityError> {
    davies_bouldin_with(x, labels, false)
}

pub fn davies_bouldin_with(
    x: &EmbeddingMatrix,
    labels: &[i32],
    include_noise: bool,
) -> Result<f64, ValidityError> {
    let part = Partition::new(x.n(), labels, include_noise)?;
    part.require_two()?;
    let (cents, sizes) = centroids(x, &part);
    let spread: Vec<f64> = per_cluster_sum(x, &part, &cents, dist_to)
        .iter()
        .zip(&sizes)
        .map(|(s, &n)| s / n as f64)
        .collect();
    let k = part.k();
    let mut total = 0f64;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..k {
            if i == j {
                continue;
            }
            let dij = crate::distance::euclidean_f64(&cents[i], &cents[j]);
            if dij == 0.0 {
                let (a, b) = (part.original[i.min(j)], part.original[i.max(j)]);
                return Err(ValidityError::CoincidentCentroids { a, b });
            }
            worst = worst.max((spread[i] + spread[j]) / dij);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

pub fn calinski_harabasz(x: &EmbeddingMatrix, labels: &[i32]) -> Result<f64, ValidityError> {
    calinski_harabasz_with(x, labels, false)
}

pub fn calinski_harabasz_with(
    x: &EmbeddingMatrix,
    labels: &[i32],
    include_noise: bool,
) -> Result<f64, ValidityError> {
    let part = Partition::new(x.n(), labels, include_noise)?;
    part.require_two()?;
    let n = part.points.len();
    let k = part.k();
    let (cents, sizes) = centroids(x, &part);
    let mut grand = vec![0f64; x.d()];
    for (c, &s) in cents.iter().zip(&sizes) {
        for (g, v) in grand.iter_mut().zip(c) {
            *g += v * s as f64;
        }
    }
    for g in grand.iter_mut() {
        *g /= n as f64;
    }
    let between: f64 = cents
        .iter()
        .zip(&sizes)
        .map(|(c, &s)| {
            s as f64
                * c.iter()
                    .zip(&grand)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
        })
        .sum();
    let within: f64 = per_cluster_sum(x, &part, &cents, |p, c| {
        let d = dist_to(p, c);
        d * d
    })
    .iter()
    .sum();
    if within == 0.0 {
        return Err(ValidityError::ZeroWithinDispersion);
    }
    Ok(between / within * ((n - k) as f64 / (k - 1) as f64))
}

/// All three indices plus metadata. Calinski-Harabasz degenerates to `+inf`
/// when within-cluster dispersion is zero.
pub fn compute_metrics(
    x: &EmbeddingMatrix,
    labels: &[i32],
    opts: &MetricsOptions,
) -> Result<MetricsReport, ValidityError> {
    let part = Partition::new(x.n(), labels, opts.include_noise)?;
    part.require_two()?;
    let n = part.points.len();
    let sample = match (opts.exact, opts.sample_size) {
        (true, _) => None,
        (false, Some(s)) => Some(s.min(n)),
        (false, None) if n > AUTO_SAMPLE_THRESHOLD => Some(AUTO_SAMPLE_SIZE),
        _ => None,
    };
    let sil = match sample {
        Some(s) => {
            let eval = stratified_sample(&part, s, opts.seed)?;
            silhouette_over(x, &part, &eval)
        }
        None => {
            let all: Vec<usize> = (0..n).collect();
            silhouette_over(x, &part, &all)
        }
    };
    let db = davies_bouldin_with(x, labels, opts.include_noise)?;
    let ch = match calinski_harabasz_with(x, labels, opts.include_noise) {
        Ok(v) => v,
        Err(ValidityError::ZeroWithinDispersion) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        silhouette_macro: sil.macro_avg,
        silhouette_micro: sil.micro_avg,
        davies_bouldin: db,
        calinski_harabasz: ch,
        n_points: n,
        k: part.k(),
        noise_excluded: !opts.include_noise,
        space: opts.space,
        sample_size: sample,
        seed: sample.map(|_| opts.seed),
    })
}

/// Adjusted Rand index between two labelings (every distinct value,
/// including −1, is its own class).
pub fn adjusted_rand_index(a: &[i32], b: &[i32]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    let mut table: BTreeMap<(i32, i32), u64> = BTreeMap::new();
    let mut rows: BTreeMap<i32, u64> = BTreeMap::new();
    let mut cols: BTreeMap<i32, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let pairs = |v: u64| (v * v.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&v| pairs(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| pairs(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| pairs(v)).sum();
    let total = pairs(n as u64);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[[f32; 2]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn duplicated_clusters_are_perfect() {
        let x = m(&[[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]]);
        let labels = [0, 0, 1, 1];
        let s = silhouette(&x, &labels).unwrap();
        assert_eq!((s.macro_avg, s.micro_avg), (1.0, 1.0));
        assert_eq!(davies_bouldin(&x, &labels).unwrap(), 0.0);
        assert_eq!(
            calinski_harabasz(&x, &labels),
            Err(ValidityError::ZeroWithinDispersion)
        );
        let r = compute_metrics(&x, &labels, &MetricsOptions::default()).unwrap();
        assert!(r.calinski_harabasz.is_infinite());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"calinski_harabasz\":\"Infinity\""));
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn singletons_score_zero() {
        let x = m(&[[0.0, 0.0], [1.0, 0.0]]);
        let s = silhouette(&x, &[0, 1]).unwrap();
        assert_eq!((s.macro_avg, s.micro_avg), (0.0, 0.0));
    }

    #[test]
    fn coincident_centroids() {
        let x = m(&[[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]]);
        assert_eq!(
            davies_bouldin(&x, &[3, 3, 7, 7]),
            Err(ValidityError::CoincidentCentroids { a: 3, b: 7 })
        );
    }

    #[test]
    fn one_cluster_is_degenerate() {
        let x = m(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        let err = Err(ValidityError::DegenerateClusterCount { k: 1 });
        assert_eq!(calinski_harabasz(&x, &[0, 0, -1]), err);
        assert_eq!(silhouette(&x, &[0, 0, 0]).map(|_| ()), err.map(|_: f64| ()));
    }

    #[test]
    fn noise_exclusion_and_report_fields() {
        let x = m(&[[0.0, 0.0], [0.1, 0.0], [5.0, 0.0], [5.1, 0.0], [50.0, 50.0]]);
        let labels = [0, 0, 1, 1, -1];
        let r = compute_metrics(&x, &labels, &MetricsOptions::default()).unwrap();
        assert_eq!((r.n_points, r.k, r.noise_excluded), (4, 2, true));
        assert_eq!(r.sample_size, None);
        let with_noise = MetricsOptions {
            include_noise: true,
            ..MetricsOptions::default()
        };
        let r2 = compute_metrics(&x, &labels, &with_noise).unwrap();
        assert_eq!((r2.n_points, r2.k, r2.noise_excluded), (5, 3, false));
        let json: serde_json::Value = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = json
            .as_object()
            .unwrap()
            .keys()
            .map(|k| k.as_str())
            .collect();
        assert_eq!(keys.len(), 10);
        for key in [
            "silhouette_macro",
            "silhouette_micro",
            "davies_bouldin",
            "calinski_harabasz",
            "n_points",
            "K",
            "noise_excluded",
            "space",
            "sample_size",
            "seed",
        ] {
            assert!(keys.contains(&key), "{key}");
        }
    }

    #[test]
    fn full_sample_matches_exact_bitwise() {
        let rows: Vec<[f32; 2]> = (0..40)
            .map(|i| [(i % 7) as f32 + (i / 20) as f32 * 9.0, (i * 13 % 5) as f32])
            .collect();
        let x = m(&rows);
        let labels: Vec<i32> = (0..40)
            .map(|i| (i / 20) + if i % 9 == 0 { 2 } else { 0 })
            .collect();
        let exact = silhouette(&x, &labels).unwrap();
        let sampled = sampled_silhouette(&x, &labels, 40, 99).unwrap();
        assert_eq!(exact.macro_avg.to_bits(), sampled.macro_avg.to_bits());
        assert_eq!(exact.micro_avg.to_bits(), sampled.micro_avg.to_bits());
    }

    #[test]
    fn stratified_quotas_cover_every_cluster() {
        let labels: Vec<i32> = (0..100).map(|i| if i < 97 { 0 } else { i - 96 }).collect();
        let part = Partition::new(100, &labels, false).unwrap();
        let s = stratified_sample(&part, 10, 3).unwrap();
        assert_eq!(s.len(), 10);
        for c in 1..4 {
            assert!(s.iter().any(|&p| labels[p] == c));
        }
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(stratified_sample(&part, 3, 3).is_err());
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]), 1.0);
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!(v < 0.0);
    }
}
