//! Reassignment of outlier documents to existing clusters, with a metrics
//! audit after every pass.
//!
//! Similarities are cosine values rescaled to `(1 + cos) / 2`, so the
//! threshold lives in `[0, 1]` whatever the sign of the vectors and a
//! threshold of 0 always absorbs every outlier.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{cluster_count, count_outliers, OUTLIER};
use crate::distance::cosine_similarity;
use crate::embedding::EmbeddingMatrix;
use crate::validity::{compute_metrics, MetricsOptions, MetricsReport, Space, ValidityError};

#[derive(Debug, Error)]
pub enum OutlierError {
    #[error("no clusters to reassign outliers to")]
    NoClusters,
    #[error("invalid reassignment policy: {0}")]
    InvalidPolicy(String),
    #[error("{labels} labels for {points} points")]
    LengthMismatch { points: usize, labels: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Compare with each cluster's mean vector.
    CentroidCosine,
    /// Take the label of the most similar clustered document.
    NearestMember,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "centroid_cosine" => Ok(Self::CentroidCosine),
            "nearest_member" => Ok(Self::NearestMember),
            other => Err(format!("unknown reassignment strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReassignmentPolicy {
    pub strategy: Strategy,
    pub threshold: f64,
    pub max_passes: usize,
    pub space: Space,
}

impl Default for ReassignmentPolicy {
    fn default() -> Self {
        Self {
            strategy: Strategy::CentroidCosine,
            threshold: 0.3,
            max_passes: 2,
            space: Space::Reduced,
        }
    }
}

impl ReassignmentPolicy {
    /// Thresholds above 1 are accepted and simply never match.
    pub fn validate(&self) -> Result<(), OutlierError> {
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return Err(OutlierError::InvalidPolicy("threshold must be >= 0".into()));
        }
        if self.max_passes == 0 {
            return Err(OutlierError::InvalidPolicy(
                "max_passes must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass_index: usize,
    pub outliers_before: usize,
    pub outliers_after: usize,
    /// Absent when fewer than two clusters exist.
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionAudit {
    pub policy: ReassignmentPolicy,
    pub original: Option<MetricsReport>,
    pub passes: Vec<PassRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reassignment {
    pub doc_id: usize,
    pub pass: usize,
    pub new_label: i32,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReassignmentOutcome {
    pub labels: Vec<i32>,
    pub audit: ReductionAudit,
    pub log: Vec<Reassignment>,
}

fn scaled_cosine(a: &[f64], b: &[f64]) -> f64 {
    (1.0 + cosine_similarity(a, b)) / 2.0
}

fn row_f64(x: &EmbeddingMatrix, i: usize) -> Vec<f64> {
    x.row(i).iter().map(|&v| f64::from(v)).collect()
}

/// Best `(label, similarity)` for each outlier under `labels`, or `None`
/// when no candidate exists. Ties prefer the larger cluster, then the lower
/// label.
fn score_pass(
    x: &EmbeddingMatrix,
    labels: &[i32],
    strategy: Strategy,
    k: usize,
) -> Vec<(usize, Option<(i32, f64)>)> {
    let mut sizes = vec![0usize; k];
    for &l in labels {
        if l >= 0 {
            sizes[l as usize] += 1;
        }
    }
    let better = |cand: (i32, f64), best: Option<(i32, f64)>| match best {
        None => true,
        Some((bl, bs)) => {
            cand.1 > bs
                || (cand.1 == bs
                    && (sizes[cand.0 as usize] > sizes[bl as usize]
                        || (sizes[cand.0 as usize] == sizes[bl as usize] && cand.0 < bl)))
        }
    };
    let outliers: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == OUTLIER)
        .collect();
    match strategy {
        Strategy::CentroidCosine => {
            let mut cents = vec![vec![0f64; x.d()]; k];
            for (i, &l) in labels.iter().enumerate() {
                if l >= 0 {
                    for (c, &v) in cents[l as usize].iter_mut().zip(x.row(i)) {
                        *c += f64::from(v);
                    }
                }
            }
            for (c, &s) in cents.iter_mut().zip(&sizes) {
                if s > 0 {
                    c.iter_mut().for_each(|v| *v /= s as f64);
                }
            }
            outliers
                .par_iter()
                .map(|&i| {
                    let xi = row_f64(x, i);
                    let mut best = None;
                    for (c, cent) in cents.iter().enumerate() {
                        if sizes[c] == 0 {
                            continue;
                        }
                        let cand = (c as i32, scaled_cosine(&xi, cent));
                        if better(cand, best) {
                            best = Some(cand);
                        }
                    }
                    (i, best)
                })
                .collect()
        }
        Strategy::NearestMember => {
            let members: Vec<(usize, Vec<f64>)> = (0..labels.len())
                .filter(|&j| labels[j] >= 0)
                .map(|j| (j, row_f64(x, j)))
                .collect();
            outliers
                .par_iter()
                .map(|&i| {
                    let xi = row_f64(x, i);
                    let mut best = None;
                    for (j, xj) in &members {
                        let cand = (labels[*j], scaled_cosine(&xi, xj));
                        if better(cand, best) {
                            best = Some(cand);
                        }
                    }
                    (i, best)
                })
                .collect()
        }
    }
}

fn metrics_or_none(
    x: &EmbeddingMatrix,
    labels: &[i32],
    opts: &MetricsOptions,
) -> Option<MetricsReport> {
    match compute_metrics(x, labels, opts) {
        Ok(r) => Some(r),
        Err(ValidityError::DegenerateClusterCount { k }) => {
            log::warn!("metrics undefined with {k} cluster(s)");
            None
        }
        Err(e) => {
            log::warn!("metrics unavailable: {e}");
            None
        }
    }
}

/// Runs up to `policy.max_passes` reassignment passes over `vectors`.
/// Each pass scores outliers against the labels at the start of the pass;
/// documents that already have a cluster are never touched. Metrics are
/// computed on `metric_vectors` after every pass; the loop ends early after
/// a pass that moves nothing.
pub fn reassign_outliers(
    vectors: &EmbeddingMatrix,
    metric_vectors: &EmbeddingMatrix,
    labels: &[i32],
    policy: &ReassignmentPolicy,
    metrics: &MetricsOptions,
) -> Result<ReassignmentOutcome, OutlierError> {
    policy.validate()?;
    for m in [vectors, metric_vectors] {
        if m.n() != labels.len() {
            return Err(OutlierError::LengthMismatch {
                points: m.n(),
                labels: labels.len(),
            });
        }
    }
    let k = cluster_count(labels);
    if k == 0 {
        return Err(OutlierError::NoClusters);
    }
    let mut current = labels.to_vec();
    let original = metrics_or_none(metric_vectors, &current, metrics);
    let mut passes = Vec::new();
    let mut log = Vec::new();
    for pass in 1..=policy.max_passes {
        let before = count_outliers(&current);
        let scored = score_pass(vectors, &current, policy.strategy, k);
        let mut moved = 0;
        for (doc, best) in scored {
            if let Some((label, sim)) = best {
                if sim >= policy.threshold {
                    current[doc] = label;
                    moved += 1;
                    log.push(Reassignment {
                        doc_id: doc,
                        pass,
                        new_label: label,
                        similarity: sim,
                    });
                }
            }
        }
        passes.push(PassRecord {
            pass_index: pass,
            outliers_before: before,
            outliers_after: before - moved,
            metrics: metrics_or_none(metric_vectors, &current, metrics),
        });
        if moved == 0 {
            break;
        }
    }
    Ok(ReassignmentOutcome {
        labels: current,
        audit: ReductionAudit {
            policy: policy.clone(),
            original,
            passes,
        },
        log,
    })
}

const ORDINALS: [&str; 10] = [
    "First", "Second", "Third", "Fourth", "Fifth", "Sixth", "Seventh", "Eighth", "Ninth", "Tenth",
];

fn pass_column(pass: usize) -> String {
    match ORDINALS.get(pass.wrapping_sub(1)) {
        Some(w) => format!("After {w} Reduction"),
        None => format!("After Reduction {pass}"),
    }
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_infinite() => "inf".to_string(),
        Some(x) => format!("{x:.2}"),
        None => "NA".to_string(),
    }
}

/// Scores table with one column for the original clustering and one per pass.
pub fn audit_table(audit: &ReductionAudit) -> String {
    let columns: Vec<Option<&MetricsReport>> = std::iter::once(audit.original.as_ref())
        .chain(audit.passes.iter().map(|p| p.metrics.as_ref()))
        .collect();
    let mut out = String::from("ClusteringScores,Original");
    for p in &audit.passes {
        out.push(',');
        out.push_str(&pass_column(p.pass_index));
    }
    out.push('\n');
    type Row = (&'static str, fn(&MetricsReport) -> f64);
    let rows: [Row; 3] = [
        ("Silhouette Score", |m| m.silhouette_macro),
        ("davies_bouldin Score", |m| m.davies_bouldin),
        ("Calinski_harabasz Score", |m| m.calinski_harabasz),
    ];
    for (name, get) in rows {
        out.push_str(name);
        for c in &columns {
            out.push(',');
            out.push_str(&cell(c.map(get)));
        }
        out.push('\n');
    }
    out
}

/// Writes `doc_id,pass,new_label,similarity` rows.
pub fn write_log<W: Write>(mut out: W, log: &[Reassignment]) -> Result<(), OutlierError> {
    writeln!(out, "doc_id,pass,new_label,similarity")?;
    for r in log {
        writeln!(
            out,
            "{},{},{},{}",
            r.doc_id, r.pass, r.new_label, r.similarity
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (EmbeddingMatrix, Vec<i32>) {
        let rows = vec![
            [1.0f32, 0.0],
            [0.9, 0.1],
            [0.0, 1.0],
            [0.1, 0.9],
            [0.7, 0.3],
            [-1.0, -1.0],
        ];
        (
            EmbeddingMatrix::from_rows(&rows).unwrap(),
            vec![0, 0, 1, 1, -1, -1],
        )
    }

    fn run(threshold: f64, strategy: Strategy) -> ReassignmentOutcome {
        let (x, labels) = fixture();
        let policy = ReassignmentPolicy {
            threshold,
            strategy,
            ..ReassignmentPolicy::default()
        };
        reassign_outliers(&x, &x, &labels, &policy, &MetricsOptions::default()).unwrap()
    }

    #[test]
    fn zero_threshold_absorbs_everything() {
        for s in [Strategy::CentroidCosine, Strategy::NearestMember] {
            let out = run(0.0, s);
            assert_eq!(count_outliers(&out.labels), 0);
            assert_eq!(out.labels[4], 0);
            assert_eq!(out.audit.passes[0].outliers_after, 0);
        }
    }

    #[test]
    fn threshold_above_one_changes_nothing() {
        let out = run(1.01, Strategy::CentroidCosine);
        assert_eq!(out.labels, fixture().1);
        assert_eq!(out.audit.passes.len(), 1);
        let p = &out.audit.passes[0];
        assert_eq!(p.outliers_before, p.outliers_after);
        assert!(out.log.is_empty());
    }

    #[test]
    fn logged_similarities_meet_threshold() {
        let out = run(0.6, Strategy::CentroidCosine);
        assert_eq!(out.labels[4], 0);
        assert_eq!(out.labels[5], OUTLIER);
        assert!(out.log.iter().all(|r| r.similarity >= 0.6));
        for (a, b) in fixture().1.iter().zip(&out.labels) {
            if *a >= 0 {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn no_clusters() {
        let (x, _) = fixture();
        let err = reassign_outliers(
            &x,
            &x,
            &[-1; 6],
            &ReassignmentPolicy::default(),
            &MetricsOptions::default(),
        );
        assert!(matches!(err, Err(OutlierError::NoClusters)));
    }

    #[test]
    fn column_names() {
        assert_eq!(pass_column(1), "After First Reduction");
        assert_eq!(pass_column(2), "After Second Reduction");
        assert_eq!(pass_column(12), "After Reduction 12");
    }
}
