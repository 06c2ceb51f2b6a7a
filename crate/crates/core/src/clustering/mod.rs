//! Density-based clustering (HDBSCAN) and a k-means baseline.

pub mod hdbscan;
pub mod kmeans;
mod union_find;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hdbscan::{
    build_mst, condense_tree, core_distances, extract_clusters_eom, hdbscan, mutual_reachability,
    CondensedEdge, CondensedTree, MstEdge,
};
pub use kmeans::{kmeans_baseline, KMeansResult};

/// Label of documents not assigned to any cluster.
pub const OUTLIER: i32 = -1;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("k = {k} must be smaller than the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid cluster parameters: {0}")]
    InvalidParams(String),
    #[error("malformed labels file at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    ExcessOfMass,
    Leaf,
}

impl std::str::FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "excess_of_mass" | "eom" => Ok(Self::ExcessOfMass),
            "leaf" => Ok(Self::Leaf),
            other => Err(format!("unknown cluster selection `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size` when absent.
    pub min_samples: Option<usize>,
    pub selection: Selection,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            min_cluster_size: 500,
            min_samples: None,
            selection: Selection::ExcessOfMass,
        }
    }
}

impl ClusterParams {
    pub fn with_min_cluster_size(min_cluster_size: usize) -> Self {
        Self {
            min_cluster_size,
            ..Self::default()
        }
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.min_cluster_size < 2 {
            return Err(ClusterError::InvalidParams(
                "min_cluster_size must be >= 2".into(),
            ));
        }
        if self.min_samples() < 1 {
            return Err(ClusterError::InvalidParams(
                "min_samples must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of a clustering run over `n` documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// Per document; [`OUTLIER`] or a cluster id in `0..n_clusters`.
    pub labels: Vec<i32>,
    pub n_clusters: usize,
    /// Indexed by cluster id.
    pub stabilities: Vec<f64>,
    pub membership_strength: Vec<f64>,
    pub condensed_tree: CondensedTree,
    pub params: ClusterParams,
}

impl ClusterModel {
    pub fn outlier_count(&self) -> usize {
        count_outliers(&self.labels)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }
}

pub fn count_outliers(labels: &[i32]) -> usize {
    labels.iter().filter(|&&l| l == OUTLIER).count()
}

/// Number of clusters implied by a label vector (largest label + 1).
pub fn cluster_count(labels: &[i32]) -> usize {
    labels
        .iter()
        .copied()
        .max()
        .map_or(0, |m| (m + 1).max(0) as usize)
}

/// Summary written next to the labels CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub params: ClusterParams,
    #[serde(rename = "K")]
    pub n_clusters: usize,
    pub stabilities: Vec<f64>,
    pub n_points: usize,
    pub n_outliers: usize,
    pub labels_file: String,
}

/// Writes `doc_id,label,membership_strength` rows.
pub fn write_labels_csv<W: Write>(
    mut out: W,
    labels: &[i32],
    strengths: Option<&[f64]>,
) -> Result<(), ClusterError> {
    writeln!(out, "doc_id,label,membership_strength")?;
    for (i, &l) in labels.iter().enumerate() {
        let s = strengths.map_or(if l >= 0 { 1.0 } else { 0.0 }, |s| s[i]);
        writeln!(out, "{i},{l},{s}")?;
    }
    Ok(())
}

/// Reads a labels CSV; rows must be in doc_id order starting from 0.
pub fn read_labels_csv<R: BufRead>(input: R) -> Result<(Vec<i32>, Vec<f64>), ClusterError> {
    let mut labels = Vec::new();
    let mut strengths = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| ClusterError::Format {
            line: i + 1,
            message,
        };
        let mut parts = line.split(',');
        let doc: usize = parts
            .next()
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad("bad doc_id".into()))?;
        if doc != labels.len() {
            return Err(bad(format!(
                "expected doc_id {}, found {doc}",
                labels.len()
            )));
        }
        let label: i32 = parts
            .next()
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad("bad label".into()))?;
        if label < OUTLIER {
            return Err(bad(format!("label {label} below -1")));
        }
        let strength: f64 = parts
            .next()
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| bad("bad membership_strength".into()))
            })
            .transpose()?
            .unwrap_or(if label >= 0 { 1.0 } else { 0.0 });
        labels.push(label);
        strengths.push(strength);
    }
    Ok((labels, strengths))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_csv_roundtrip() {
        let labels = vec![0, -1, 1, 0];
        let strengths = vec![0.5, 0.0, 1.0, 0.25];
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &labels, Some(&strengths)).unwrap();
        let (l, s) = read_labels_csv(&buf[..]).unwrap();
        assert_eq!(l, labels);
        assert_eq!(s, strengths);
    }

    #[test]
    fn labels_csv_rejects_gaps() {
        let text = "doc_id,label,membership_strength\n0,1,1\n2,1,1\n";
        assert!(read_labels_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn params_defaults() {
        let p = ClusterParams::default();
        assert_eq!(p.min_cluster_size, 500);
        assert_eq!(p.min_samples(), 500);
        assert!(ClusterParams::with_min_cluster_size(1).validate().is_err());
    }
}
