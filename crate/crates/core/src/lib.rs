//! Topic clustering for development-finance project narratives.
//!
//! The crate covers the whole chain from CRS-style CSV records to topic
//! reports: deduplicated ingestion ([`corpus`]), document vectors
//! ([`embedding`]), dimensionality reduction ([`reduction`]), HDBSCAN and a
//! k-means baseline ([`clustering`]), cluster validity indices
//! ([`validity`]), class-based TF-IDF labeling ([`labeling`]), outlier
//! reassignment with quality audits ([`outliers`]), aggregate reports
//! ([`analytics`]) and a cached stage runner ([`pipeline`]).

pub mod analytics;
pub mod clustering;
pub mod corpus;
pub mod distance;
pub mod embedding;
pub mod labeling;
pub mod outliers;
pub mod pipeline;
pub mod reduction;
pub mod synthetic;
pub mod validity;

pub use clustering::{ClusterModel, ClusterParams, CondensedTree, OUTLIER};
pub use corpus::{Corpus, ProjectRecord, Schema, UniqueDocument};
pub use embedding::{EmbedderConfig, EmbeddingMatrix};
pub use labeling::{ClassTermWeights, TopicSummary, Vocabulary};
pub use outliers::{ReassignmentPolicy, ReductionAudit};
pub use reduction::{Metric, NeighborGraph, ReductionParams};
pub use validity::MetricsReport;
