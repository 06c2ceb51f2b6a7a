//! Stage runner: ingest → embed → reduce → cluster → reduce-outliers →
//! label → report, with every artifact cached under a key derived from its
//! parameters and the content of its inputs.
//!
//! A configuration file is TOML with optional sections matching
//! [`PipelineConfig`]:
//!
//! ```toml
//! seed = 42
//! out = "out"
//! cache = "cache"
//!
//! [input]
//! records = "crs.csv"
//!
//! [reduction]
//! target_dims = 12
//!
//! [clustering]
//! min_cluster_size = 500
//! ```
//!
//! Relative paths are resolved against the configuration file's directory.

pub mod cache;
pub mod stages;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClusterParams;
use crate::corpus::Schema;
use crate::embedding::{EmbedMethod, EmbedderConfig};
use crate::labeling::{LabelingConfig, TopicSummary};
use crate::outliers::{ReassignmentPolicy, ReductionAudit};
use crate::reduction::ReductionParams;
use crate::validity::{MetricsOptions, MetricsReport, Space};

pub use cache::{CacheLock, KeyBuilder};
pub use stages::{ReportKind, ReportsConfig, StageError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cache directory {} is locked by another run (remove {} if stale)", .0.display(), .0.join(cache::LOCK_FILE).display())]
    Locked(PathBuf),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: StageError,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// 0 success, 1 usage or configuration, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Locked(_) => 1,
            PipelineError::Stage { source, .. } => source.exit_code(),
            PipelineError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// CRS-style CSV export.
    pub records: Option<PathBuf>,
    /// EMB1 file, required when `embedding.method = "import"`.
    pub embeddings: Option<PathBuf>,
    /// JSONL `{topic_id, label}` responses to merge into the summaries.
    pub labels_response: Option<PathBuf>,
    /// Purpose-code reference CSV replacing the bundled table.
    pub purpose_codes: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides the seed of every seeded stage when set.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub cache: PathBuf,
    pub input: InputConfig,
    pub schema: Schema,
    pub embedding: EmbedderConfig,
    pub reduction: ReductionParams,
    pub clustering: ClusterParams,
    pub outliers: ReassignmentPolicy,
    pub metrics: MetricsOptions,
    pub labeling: LabelingConfig,
    pub reports: ReportsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: PathBuf::from("out"),
            cache: PathBuf::from("cache"),
            input: InputConfig::default(),
            schema: Schema::default(),
            embedding: EmbedderConfig::default(),
            reduction: ReductionParams::default(),
            clustering: ClusterParams::default(),
            outliers: ReassignmentPolicy::default(),
            metrics: MetricsOptions::default(),
            labeling: LabelingConfig::default(),
            reports: ReportsConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.out);
        fix(&mut cfg.cache);
        for p in [
            &mut cfg.input.records,
            &mut cfg.input.embeddings,
            &mut cfg.input.labels_response,
            &mut cfg.input.purpose_codes,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        Ok(cfg)
    }

    /// Copies the global seed into every seeded stage.
    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.embedding.projection_seed = seed;
            self.reduction.seed = seed;
            self.metrics.seed = seed;
        }
    }

    /// Checks that referenced files exist before any stage runs.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let records = self
            .input
            .records
            .as_ref()
            .ok_or_else(|| PipelineError::Config("input.records is not set".into()))?;
        let must_exist = |p: &Path, what: &str| {
            if p.is_file() {
                Ok(())
            } else {
                Err(PipelineError::Config(format!(
                    "{what} {} not found",
                    p.display()
                )))
            }
        };
        must_exist(records, "input file")?;
        if self.embedding.method == EmbedMethod::Import {
            let p = self.input.embeddings.as_ref().ok_or_else(|| {
                PipelineError::Config("embedding.method = \"import\" needs input.embeddings".into())
            })?;
            must_exist(p, "embeddings file")?;
        }
        if let Some(p) = &self.input.labels_response {
            must_exist(p, "labels response file")?;
        }
        if let Some(p) = &self.input.purpose_codes {
            must_exist(p, "purpose-code table")?;
        }
        self.embedding
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.clustering
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.outliers
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.labeling
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactFile {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub key: String,
    pub cached: bool,
    pub seconds: f64,
    pub path: PathBuf,
    pub files: Vec<ArtifactFile>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsChain {
    pub original: Option<MetricsReport>,
    pub passes: Vec<Option<MetricsReport>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: Option<u64>,
    pub full_cache_hit: bool,
    pub stages: Vec<StageRecord>,
    pub metrics: MetricsChain,
    pub n_topics: usize,
    pub n_documents: usize,
    pub total_seconds: f64,
}

impl Manifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// Everything that must match between two reproducible runs.
    pub fn hashes(&self) -> Vec<StageHashes> {
        self.stages
            .iter()
            .map(|s| {
                (
                    s.stage.clone(),
                    s.key.clone(),
                    s.files
                        .iter()
                        .map(|f| (f.name.clone(), f.sha256.clone()))
                        .collect(),
                )
            })
            .collect()
    }
}

/// `(stage, key, [(file, sha256)])`.
pub type StageHashes = (String, String, Vec<(String, String)>);

pub const MANIFEST_FILE: &str = "manifest.json";

struct Runner<'a> {
    cache: &'a Path,
    stages: Vec<StageRecord>,
}

impl Runner<'_> {
    fn run(
        &mut self,
        stage: &'static str,
        key: String,
        build: impl FnOnce(&Path) -> Result<(), StageError>,
    ) -> Result<PathBuf, PipelineError> {
        let start = Instant::now();
        let dir = cache::artifact_dir(self.cache, stage, &key);
        let cached = dir.is_dir();
        if cached {
            log::info!("{stage}: cache hit {}", &key[..12]);
        } else {
            cache::build_artifact(self.cache, stage, &key, build)
                .map_err(|source| PipelineError::Stage { stage, source })?;
        }
        let files = cache::list_files(&dir)?
            .into_iter()
            .map(|(name, sha256, bytes)| ArtifactFile {
                name,
                sha256,
                bytes,
            })
            .collect();
        self.stages.push(StageRecord {
            stage: stage.to_string(),
            key,
            cached,
            seconds: start.elapsed().as_secs_f64(),
            path: dir.clone(),
            files,
        });
        Ok(dir)
    }
}

fn key_with_file(
    stage: &'static str,
    kb: KeyBuilder,
    path: Option<&Path>,
) -> Result<String, PipelineError> {
    let kb = match path {
        Some(p) => kb.file(p).map_err(|e| PipelineError::Stage {
            stage,
            source: StageError::Io(e),
        })?,
        None => kb,
    };
    Ok(kb.finish())
}

/// Runs every stage, reusing cached artifacts whose keys match, copies the
/// small outputs into `config.out` and writes the manifest there.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut cfg = config.clone();
    cfg.apply_seed();
    cfg.validate()?;
    let started = Instant::now();
    let _lock = CacheLock::acquire(&cfg.cache).map_err(|e| match e.kind() {
        std::io::ErrorKind::AlreadyExists => PipelineError::Locked(cfg.cache.clone()),
        _ => PipelineError::Io(e),
    })?;
    let records_path = cfg.input.records.clone().expect("validated");
    let mut runner = Runner {
        cache: &cfg.cache,
        stages: Vec::new(),
    };

    let ingest_key = key_with_file(
        "ingest",
        KeyBuilder::new("ingest").params(&cfg.schema),
        Some(&records_path),
    )?;
    let ingest_dir = runner.run("ingest", ingest_key.clone(), |d| {
        stages::ingest(&records_path, &cfg.schema, d).map(|_| ())
    })?;
    let corpus_path = ingest_dir.join(stages::CORPUS_FILE);

    let import = match cfg.embedding.method {
        EmbedMethod::Import => cfg.input.embeddings.clone(),
        EmbedMethod::Baseline => None,
    };
    let embed_key = key_with_file(
        "embed",
        KeyBuilder::new("embed")
            .upstream(&ingest_key)
            .params(&cfg.embedding),
        import.as_deref(),
    )?;
    let embed_dir = runner.run("embed", embed_key.clone(), |d| {
        stages::embed(&corpus_path, &cfg.embedding, import.as_deref(), d).map(|_| ())
    })?;
    let emb_path = embed_dir.join(stages::EMBEDDINGS_FILE);

    let reduce_key = KeyBuilder::new("reduce")
        .upstream(&embed_key)
        .params(&cfg.reduction)
        .finish();
    let reduce_dir = runner.run("reduce", reduce_key.clone(), |d| {
        stages::reduce(&emb_path, &cfg.reduction, d).map(|_| ())
    })?;
    let reduced_path = reduce_dir.join(stages::REDUCED_FILE);
    let metric_vectors = match cfg.metrics.space {
        Space::Reduced => reduced_path.clone(),
        Space::Original => emb_path.clone(),
    };
    let outlier_vectors = match cfg.outliers.space {
        Space::Reduced => reduced_path.clone(),
        Space::Original => emb_path.clone(),
    };

    let cluster_key = KeyBuilder::new("cluster")
        .upstream(&reduce_key)
        .upstream(&embed_key)
        .params(&cfg.clustering)
        .params(&cfg.metrics)
        .finish();
    let cluster_dir = runner.run("cluster", cluster_key.clone(), |d| {
        stages::cluster(
            &reduced_path,
            &cfg.clustering,
            &metric_vectors,
            &cfg.metrics,
            d,
        )
        .map(|_| ())
    })?;

    let outliers_key = KeyBuilder::new("reduce-outliers")
        .upstream(&cluster_key)
        .params(&cfg.outliers)
        .params(&cfg.metrics)
        .finish();
    let outliers_dir = runner.run("reduce-outliers", outliers_key.clone(), |d| {
        stages::reduce_outliers(
            &outlier_vectors,
            &metric_vectors,
            &cluster_dir.join(stages::LABELS_FILE),
            &cfg.outliers,
            &cfg.metrics,
            d,
        )
        .map(|_| ())
    })?;
    let final_labels = outliers_dir.join(stages::LABELS_FILE);

    let label_key = key_with_file(
        "label",
        KeyBuilder::new("label")
            .upstream(&ingest_key)
            .upstream(&outliers_key)
            .params(&cfg.labeling),
        cfg.input.labels_response.as_deref(),
    )?;
    let label_dir = runner.run("label", label_key.clone(), |d| {
        stages::label(
            &corpus_path,
            &final_labels,
            &cfg.labeling,
            cfg.input.labels_response.as_deref(),
            d,
        )
        .map(|_| ())
    })?;

    let report_key = key_with_file(
        "report",
        KeyBuilder::new("report")
            .upstream(&ingest_key)
            .upstream(&outliers_key)
            .params(&cfg.reports),
        cfg.input.purpose_codes.as_deref(),
    )?;
    runner.run("report", report_key, |d| {
        stages::report(
            &ingest_dir.join(stages::RECORDS_FILE),
            &corpus_path,
            &final_labels,
            &cfg.reports,
            cfg.input.purpose_codes.as_deref(),
            d,
        )
        .map(|_| ())
    })?;

    let read_stage = |stage: &'static str, e: StageError| PipelineError::Stage { stage, source: e };
    let audit: ReductionAudit = stages::read_json(&outliers_dir.join(stages::AUDIT_FILE))
        .map_err(|e| read_stage("reduce-outliers", e))?;
    let topics: Vec<TopicSummary> = stages::read_json(&label_dir.join(stages::TOPICS_FILE))
        .map_err(|e| read_stage("label", e))?;
    let n_documents = stages::load_labels(&final_labels)
        .map_err(|e| read_stage("reduce-outliers", e))?
        .0
        .len();

    std::fs::create_dir_all(&cfg.out)?;
    for s in &runner.stages {
        let target = cfg.out.join(&s.stage);
        std::fs::create_dir_all(&target)?;
        for f in &s.files {
            if !f.name.ends_with(".emb1") {
                std::fs::copy(s.path.join(&f.name), target.join(&f.name))?;
            }
        }
    }
    let manifest = Manifest {
        seed: cfg.seed,
        full_cache_hit: runner.stages.iter().all(|s| s.cached),
        metrics: MetricsChain {
            original: audit.original.clone(),
            passes: audit.passes.iter().map(|p| p.metrics.clone()).collect(),
        },
        n_topics: topics.len(),
        n_documents,
        stages: runner.stages,
        total_seconds: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?;
    std::fs::write(cfg.out.join(MANIFEST_FILE), json)?;
    log::info!(
        "run complete: {} topics over {} documents in {:.1}s{}",
        manifest.n_topics,
        manifest.n_documents,
        manifest.total_seconds,
        if manifest.full_cache_hit {
            " (full cache hit)"
        } else {
            ""
        }
    );
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_sections_and_seed() {
        let mut cfg = PipelineConfig::from_toml(
            "seed = 9\n[clustering]\nmin_cluster_size = 50\n[reduction]\nmethod = \"pca\"\n",
        )
        .unwrap();
        assert_eq!(cfg.clustering.min_cluster_size, 50);
        assert_eq!(cfg.outliers.max_passes, 2);
        cfg.apply_seed();
        assert_eq!(
            (
                cfg.reduction.seed,
                cfg.embedding.projection_seed,
                cfg.metrics.seed
            ),
            (9, 9, 9)
        );
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn missing_input_is_a_config_error() {
        let cfg = PipelineConfig {
            input: InputConfig {
                records: Some("/nonexistent.csv".into()),
                ..InputConfig::default()
            },
            ..PipelineConfig::default()
        };
        let err = run_pipeline(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
