//! Dimensionality reduction ahead of clustering.
//!
//! Two paths produce an `n × target_dims` matrix: [`pca::pca_reduce`], an
//! exactly verifiable linear projection, and [`umap::umap_reduce`], the
//! fuzzy-simplicial-set embedding used by default. Both rely on the neighbor
//! graph machinery in [`knn`].

pub mod knn;
pub mod pca;
pub mod umap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use knn::{knn_graph, KnnMode, NeighborGraph};
pub use pca::{pca_fit, pca_reduce, PcaModel};
pub use umap::{umap_reduce, UmapOutput};

use crate::embedding::EmbeddingMatrix;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("k = {k} must be smaller than the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("need more than n_neighbors = {n_neighbors} points, got {n}")]
    TooFewPoints { n: usize, n_neighbors: usize },
    #[error("invalid reduction parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Embedding(#[from] crate::embedding::EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
    Euclidean,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "euclidean" => Ok(Self::Euclidean),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionMethod {
    Pca,
    Umap,
}

impl std::str::FromStr for ReductionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pca" => Ok(Self::Pca),
            "umap" => Ok(Self::Umap),
            other => Err(format!("unknown reduction method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionParams {
    pub method: ReductionMethod,
    pub target_dims: usize,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub n_epochs: usize,
    pub negative_samples: usize,
    pub input_metric: Metric,
    pub seed: u64,
    /// Serial SGD is bit-reproducible; the parallel mode is not.
    pub serial: bool,
    pub knn_mode: KnnMode,
}

impl Default for ReductionParams {
    fn default() -> Self {
        Self {
            method: ReductionMethod::Umap,
            target_dims: 12,
            n_neighbors: 15,
            min_dist: 0.1,
            n_epochs: 200,
            negative_samples: 5,
            input_metric: Metric::Cosine,
            seed: 0,
            serial: true,
            knn_mode: KnnMode::Auto,
        }
    }
}

impl ReductionParams {
    pub fn validate(&self, d: usize) -> Result<(), ReductionError> {
        if self.target_dims < 2 {
            return Err(ReductionError::InvalidParams(
                "target_dims must be >= 2".into(),
            ));
        }
        if self.target_dims >= d && self.method == ReductionMethod::Umap {
            return Err(ReductionError::InvalidParams(format!(
                "target_dims {} must be below input dimensionality {d}",
                self.target_dims
            )));
        }
        if self.n_neighbors < 2 {
            return Err(ReductionError::InvalidParams(
                "n_neighbors must be >= 2".into(),
            ));
        }
        if !(self.min_dist >= 0.0 && self.min_dist.is_finite()) {
            return Err(ReductionError::InvalidParams(
                "min_dist must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Runs the configured reduction method.
pub fn reduce(
    x: &EmbeddingMatrix,
    params: &ReductionParams,
) -> Result<EmbeddingMatrix, ReductionError> {
    params.validate(x.d())?;
    match params.method {
        ReductionMethod::Pca => pca_reduce(x, params.target_dims),
        ReductionMethod::Umap => umap_reduce(x, params).map(|o| o.embedding),
    }
}

/// Fraction of each point's input-space k nearest neighbors that are also
/// among its k nearest neighbors in `output`, averaged over points.
pub fn neighbor_preservation(
    input: &EmbeddingMatrix,
    output: &EmbeddingMatrix,
    k: usize,
    input_metric: Metric,
) -> Result<f64, ReductionError> {
    let a = knn_graph(input, k, input_metric, KnnMode::Exact, 0)?;
    let b = knn_graph(output, k, Metric::Euclidean, KnnMode::Exact, 0)?;
    let mut kept = 0usize;
    for i in 0..input.n() {
        let out: std::collections::HashSet<u32> = b.neighbors(i).iter().copied().collect();
        kept += a.neighbors(i).iter().filter(|j| out.contains(j)).count();
    }
    Ok(kept as f64 / (input.n() * k) as f64)
}

/// Fraction of each point's k nearest neighbors (euclidean) sharing its label.
pub fn label_neighbor_purity(
    x: &EmbeddingMatrix,
    labels: &[usize],
    k: usize,
) -> Result<f64, ReductionError> {
    let g = knn_graph(x, k, Metric::Euclidean, KnnMode::Exact, 0)?;
    let mut same = 0usize;
    for (i, &li) in labels.iter().enumerate() {
        same += g
            .neighbors(i)
            .iter()
            .filter(|&&j| labels[j as usize] == li)
            .count();
    }
    Ok(same as f64 / (x.n() * k) as f64)
}
