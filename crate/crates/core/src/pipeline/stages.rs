//! One function per stage. Each reads its inputs from files and writes its
//! artifacts into a directory, so stages can run alone or chained.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    self, AnalyticsError, MarkerRule, Measure, PurposeCodeTable, TrackedTotals,
};
use crate::clustering::{self, ClusterError, ClusterParams, ModelFile};
use crate::corpus::{self, Corpus, CorpusError, ProjectRecord, RioMarker, Schema};
use crate::embedding::{self, EmbedMethod, EmbedderConfig, EmbeddingError, EmbeddingMatrix};
use crate::labeling::{self, LabelingConfig, LabelingError, TopicSummary};
use crate::outliers::{self, OutlierError, ReassignmentPolicy, ReductionAudit};
use crate::reduction::{self, ReductionError, ReductionParams};
use crate::validity::{self, MetricsOptions, MetricsReport, ValidityError};

pub const RECORDS_FILE: &str = "records.csv";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.emb1";
pub const REDUCED_FILE: &str = "reduced.emb1";
pub const LABELS_FILE: &str = "labels.csv";
pub const MODEL_FILE: &str = "model.json";
pub const TREE_FILE: &str = "condensed_tree.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const AUDIT_FILE: &str = "audit.json";
pub const AUDIT_TABLE_FILE: &str = "audit.csv";
pub const REASSIGNMENTS_FILE: &str = "reassignments.csv";
pub const TOPICS_FILE: &str = "topics.json";
pub const PROMPTS_FILE: &str = "prompts.jsonl";

/// Attached to every metrics log line.
pub const METRICS_CAVEAT: &str =
    "convex-cluster indices tend to read lower for density-based clusterings";

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Validity(#[from] ValidityError),
    #[error(transparent)]
    Labeling(#[from] LabelingError),
    #[error(transparent)]
    Outlier(#[from] OutlierError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("invalid stage input: {0}")]
    Invalid(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl StageError {
    /// 1 for bad parameters, 2 for bad data, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            StageError::Embedding(EmbeddingError::InvalidConfig(_))
            | StageError::Reduction(ReductionError::InvalidParams(_))
            | StageError::Cluster(ClusterError::InvalidParams(_))
            | StageError::Labeling(LabelingError::InvalidConfig(_))
            | StageError::Outlier(OutlierError::InvalidPolicy(_))
            | StageError::Analytics(AnalyticsError::MissingReferenceTable(_))
            | StageError::Invalid(_) => 1,
            StageError::Corpus(CorpusError::Io(_))
            | StageError::Embedding(EmbeddingError::Io(_))
            | StageError::Cluster(ClusterError::Io(_))
            | StageError::Labeling(LabelingError::Io(_))
            | StageError::Outlier(OutlierError::Io(_))
            | StageError::Io(_) => 3,
            _ => 2,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StageError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StageError> {
    Ok(serde_json::from_reader(BufReader::new(fs::File::open(
        path,
    )?))?)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, StageError> {
    Ok(Corpus::read_jsonl(BufReader::new(fs::File::open(path)?))?)
}

pub fn load_records(path: &Path) -> Result<Vec<ProjectRecord>, StageError> {
    let f = BufReader::new(fs::File::open(path)?);
    Ok(corpus::parse_records(f, &Schema::default())?.0)
}

pub fn load_labels(path: &Path) -> Result<(Vec<i32>, Vec<f64>), StageError> {
    Ok(clustering::read_labels_csv(BufReader::new(
        fs::File::open(path)?,
    ))?)
}

fn save_labels(path: &Path, labels: &[i32], strengths: Option<&[f64]>) -> Result<(), StageError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    clustering::write_labels_csv(&mut w, labels, strengths)?;
    w.flush()?;
    Ok(())
}

fn log_metrics(stage: &str, m: &MetricsReport) {
    log::info!(
        "{stage}: K={} n={} silhouette_macro={:.4} silhouette_micro={:.4} davies_bouldin={:.4} calinski_harabasz={:.2} space={:?} noise_excluded={} ({METRICS_CAVEAT})",
        m.k,
        m.n_points,
        m.silhouette_macro,
        m.silhouette_micro,
        m.davies_bouldin,
        m.calinski_harabasz,
        m.space,
        m.noise_excluded
    );
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub usable_records: usize,
    pub excluded_records: usize,
    pub unique_documents: usize,
    pub malformed_numeric: u64,
    pub invalid_marker: u64,
}

/// Parses the CRS export, writes the normalised records and the
/// deduplicated corpus.
pub fn ingest(input: &Path, schema: &Schema, dir: &Path) -> Result<IngestSummary, StageError> {
    let f = BufReader::new(fs::File::open(input)?);
    let (records, warnings) = corpus::parse_records(f, schema)?;
    let corpus = corpus::deduplicate(&records);
    if corpus.is_empty() {
        return Err(StageError::Invalid(
            "no record carries narrative text".into(),
        ));
    }
    let mut w = BufWriter::new(fs::File::create(dir.join(RECORDS_FILE))?);
    corpus::write_records(&mut w, &records)?;
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join(CORPUS_FILE))?);
    corpus.write_jsonl(&mut w)?;
    w.flush()?;
    let summary = IngestSummary {
        rows: records.len(),
        usable_records: corpus.total_records,
        excluded_records: corpus.excluded_record_ids.len(),
        unique_documents: corpus.len(),
        malformed_numeric: warnings.malformed_numeric,
        invalid_marker: warnings.invalid_marker,
    };
    log::info!(
        "ingest: {} rows, {} usable records, {} unique documents, {} without text",
        summary.rows,
        summary.usable_records,
        summary.unique_documents,
        summary.excluded_records
    );
    write_json(&dir.join("ingest.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedSummary {
    pub n: usize,
    pub d: usize,
    pub method: EmbedMethod,
    pub empty_documents: Vec<usize>,
}

/// Baseline embedding of the corpus, or validation of imported vectors.
pub fn embed(
    corpus_path: &Path,
    cfg: &EmbedderConfig,
    import: Option<&Path>,
    dir: &Path,
) -> Result<EmbedSummary, StageError> {
    let corpus = load_corpus(corpus_path)?;
    let (matrix, empty) = match cfg.method {
        EmbedMethod::Import => {
            let path = import.ok_or_else(|| {
                StageError::Invalid("embedding method `import` needs an embeddings file".into())
            })?;
            (
                embedding::import_embeddings(path, corpus.len())?,
                Vec::new(),
            )
        }
        EmbedMethod::Baseline => {
            let out = embedding::baseline_embed(&corpus, cfg)?;
            (out.matrix, out.empty_docs)
        }
    };
    if !empty.is_empty() {
        log::warn!("embed: {} documents produced no n-grams", empty.len());
    }
    matrix.save(&dir.join(EMBEDDINGS_FILE))?;
    let summary = EmbedSummary {
        n: matrix.n(),
        d: matrix.d(),
        method: cfg.method,
        empty_documents: empty,
    };
    log::info!(
        "embed: {} x {} ({:?})",
        summary.n,
        summary.d,
        summary.method
    );
    write_json(&dir.join("embed.json"), &summary)?;
    Ok(summary)
}

pub fn reduce(
    emb_path: &Path,
    params: &ReductionParams,
    dir: &Path,
) -> Result<(usize, usize), StageError> {
    let x = EmbeddingMatrix::load(emb_path)?;
    let y = reduction::reduce(&x, params)?;
    y.save(&dir.join(REDUCED_FILE))?;
    log::info!(
        "reduce: {} x {} -> {} x {} ({:?})",
        x.n(),
        x.d(),
        y.n(),
        y.d(),
        params.method
    );
    write_json(&dir.join("reduce.json"), params)?;
    Ok((y.n(), y.d()))
}

/// Metrics with a warning instead of an error when fewer than two clusters exist.
fn optional_metrics(
    stage: &str,
    x: &EmbeddingMatrix,
    labels: &[i32],
    opts: &MetricsOptions,
) -> Result<Option<MetricsReport>, StageError> {
    match validity::compute_metrics(x, labels, opts) {
        Ok(m) => {
            log_metrics(stage, &m);
            Ok(Some(m))
        }
        Err(ValidityError::DegenerateClusterCount { k }) => {
            log::warn!("{stage}: metrics undefined with {k} cluster(s)");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub model: ModelFile,
    pub metrics: Option<MetricsReport>,
}

/// HDBSCAN on the reduced vectors. `metric_vectors` selects the space the
/// validity indices are computed in.
pub fn cluster(
    reduced_path: &Path,
    params: &ClusterParams,
    metric_vectors: &Path,
    metrics: &MetricsOptions,
    dir: &Path,
) -> Result<ClusterSummary, StageError> {
    let y = EmbeddingMatrix::load(reduced_path)?;
    let model = clustering::hdbscan(&y, params)?;
    save_labels(
        &dir.join(LABELS_FILE),
        &model.labels,
        Some(&model.membership_strength),
    )?;
    write_json(&dir.join(TREE_FILE), &model.condensed_tree)?;
    let file = ModelFile {
        params: params.clone(),
        n_clusters: model.n_clusters,
        stabilities: model.stabilities.clone(),
        n_points: model.labels.len(),
        n_outliers: model.outlier_count(),
        labels_file: LABELS_FILE.into(),
    };
    write_json(&dir.join(MODEL_FILE), &file)?;
    log::info!(
        "cluster: K={} outliers={} ({:.1}%)",
        file.n_clusters,
        file.n_outliers,
        100.0 * file.n_outliers as f64 / file.n_points.max(1) as f64
    );
    let mv = if metric_vectors == reduced_path {
        y
    } else {
        EmbeddingMatrix::load(metric_vectors)?
    };
    let m = optional_metrics("cluster", &mv, &model.labels, metrics)?;
    write_json(&dir.join(METRICS_FILE), &m)?;
    Ok(ClusterSummary {
        model: file,
        metrics: m,
    })
}

/// Stand-alone metrics for a labels file over a vectors file.
pub fn metrics(
    vectors_path: &Path,
    labels_path: &Path,
    opts: &MetricsOptions,
) -> Result<MetricsReport, StageError> {
    let x = EmbeddingMatrix::load(vectors_path)?;
    let (labels, _) = load_labels(labels_path)?;
    let m = validity::compute_metrics(&x, &labels, opts)?;
    log_metrics("metrics", &m);
    Ok(m)
}

pub fn reduce_outliers(
    vectors_path: &Path,
    metric_vectors_path: &Path,
    labels_path: &Path,
    policy: &ReassignmentPolicy,
    opts: &MetricsOptions,
    dir: &Path,
) -> Result<ReductionAudit, StageError> {
    let x = EmbeddingMatrix::load(vectors_path)?;
    let mx = if metric_vectors_path == vectors_path {
        x.clone()
    } else {
        EmbeddingMatrix::load(metric_vectors_path)?
    };
    let (labels, strengths) = load_labels(labels_path)?;
    let out = outliers::reassign_outliers(&x, &mx, &labels, policy, opts)?;
    // Reassigned documents keep strength 0: they were not density members.
    let kept: Vec<f64> = labels
        .iter()
        .zip(&strengths)
        .map(|(&l, &s)| if l >= 0 { s } else { 0.0 })
        .collect();
    save_labels(&dir.join(LABELS_FILE), &out.labels, Some(&kept))?;
    write_json(&dir.join(AUDIT_FILE), &out.audit)?;
    fs::write(
        dir.join(AUDIT_TABLE_FILE),
        outliers::audit_table(&out.audit),
    )?;
    let mut w = BufWriter::new(fs::File::create(dir.join(REASSIGNMENTS_FILE))?);
    outliers::write_log(&mut w, &out.log)?;
    w.flush()?;
    for p in &out.audit.passes {
        log::info!(
            "reduce-outliers: pass {} outliers {} -> {}",
            p.pass_index,
            p.outliers_before,
            p.outliers_after
        );
        if let Some(m) = &p.metrics {
            log_metrics("reduce-outliers", m);
        }
    }
    Ok(out.audit)
}

/// Topic summaries and labeling prompts; merges a response file if given.
pub fn label(
    corpus_path: &Path,
    labels_path: &Path,
    cfg: &LabelingConfig,
    response: Option<&Path>,
    dir: &Path,
) -> Result<Vec<TopicSummary>, StageError> {
    let corpus = load_corpus(corpus_path)?;
    let (labels, _) = load_labels(labels_path)?;
    if labels.len() != corpus.len() {
        return Err(StageError::Invalid(format!(
            "{} labels for {} documents",
            labels.len(),
            corpus.len()
        )));
    }
    let (_, mut summaries) = labeling::summarize(&corpus, &labels, cfg)?;
    if let Some(path) = response {
        let names = labeling::read_labels(BufReader::new(fs::File::open(path)?))?;
        let unknown = labeling::apply_labels(&mut summaries, &names);
        if !unknown.is_empty() {
            log::warn!("label: response names unknown topics {unknown:?}");
        }
    }
    let mut w = BufWriter::new(fs::File::create(dir.join(PROMPTS_FILE))?);
    labeling::write_prompts(&mut w, &summaries, &corpus)?;
    w.flush()?;
    write_json(&dir.join(TOPICS_FILE), &summaries)?;
    log::info!("label: {} topics summarised", summaries.len());
    Ok(summaries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Tracked,
    Amounts,
    Markers,
    Sectors,
    Coverage,
    Dyads,
    Geo,
    Trends,
}

impl ReportKind {
    pub const ALL: [ReportKind; 8] = [
        ReportKind::Tracked,
        ReportKind::Amounts,
        ReportKind::Markers,
        ReportKind::Sectors,
        ReportKind::Coverage,
        ReportKind::Dyads,
        ReportKind::Geo,
        ReportKind::Trends,
    ];
}

impl std::str::FromStr for ReportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown report `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportsConfig {
    pub reports: Vec<ReportKind>,
    /// Topics for amounts, markers, dyads and geo; trends default to all.
    pub topics: Vec<i32>,
    pub measure: Measure,
    pub markers: Vec<RioMarker>,
    pub marker_rule: MarkerRule,
    pub normalize: bool,
}

impl Default for ReportsConfig {
    fn default() -> Self {
        Self {
            reports: ReportKind::ALL.to_vec(),
            topics: Vec::new(),
            measure: Measure::Disbursement,
            markers: vec![RioMarker::Mitigation, RioMarker::Adaptation],
            marker_rule: MarkerRule::Significant,
            normalize: true,
        }
    }
}

/// Writes the selected reports; returns the file names written.
pub fn report(
    records_path: &Path,
    corpus_path: &Path,
    labels_path: &Path,
    cfg: &ReportsConfig,
    purpose_codes: Option<&Path>,
    dir: &Path,
) -> Result<Vec<String>, StageError> {
    let records = load_records(records_path)?;
    let corpus = load_corpus(corpus_path)?;
    let (labels, _) = load_labels(labels_path)?;
    let assignment = analytics::assign_records(&corpus, &labels)?;
    let table = match purpose_codes {
        Some(p) => PurposeCodeTable::load(p)?,
        None => PurposeCodeTable::bundled(),
    };
    let mut written = Vec::new();
    let mut emit = |name: String, body: String| -> Result<(), StageError> {
        fs::write(dir.join(&name), body)?;
        written.push(name);
        Ok(())
    };
    let mut kinds = cfg.reports.clone();
    kinds.sort();
    kinds.dedup();
    for kind in kinds {
        let needs_topics = matches!(
            kind,
            ReportKind::Amounts | ReportKind::Markers | ReportKind::Dyads | ReportKind::Geo
        );
        if needs_topics && cfg.topics.is_empty() {
            log::info!("report: {kind:?} skipped (no topics selected)");
            continue;
        }
        match kind {
            ReportKind::Tracked => {
                let r = analytics::tracked_vs_outliers_by_year(&assignment, &records);
                emit("tracked_by_year.csv".into(), r.to_csv())?;
                emit(
                    "tracked_totals.csv".into(),
                    analytics::tracked_totals_table(
                        &TrackedTotals::from_labels(&labels),
                        &r.totals,
                    ),
                )?;
            }
            ReportKind::Amounts => {
                let r =
                    analytics::aggregate_amounts(&assignment, &records, &cfg.topics, cfg.measure)?;
                if r.missing_amounts > 0 {
                    log::info!(
                        "report: {} selected records lack a {} amount",
                        r.missing_amounts,
                        cfg.measure.name()
                    );
                }
                emit("amounts.csv".into(), r.series.to_csv())?;
            }
            ReportKind::Markers => {
                let r = analytics::compare_with_markers(
                    &assignment,
                    &records,
                    &cfg.markers,
                    cfg.marker_rule,
                    &cfg.topics,
                    cfg.measure,
                )?;
                emit("markers.csv".into(), r.to_csv())?;
            }
            ReportKind::Sectors => {
                let m = analytics::map_topics_to_sectors(&assignment, &records, &table);
                emit("sectors.csv".into(), m.to_csv())?;
            }
            ReportKind::Coverage => {
                let m = analytics::map_topics_to_sectors(&assignment, &records, &table);
                let rows = analytics::coverage_table(&m, &records, &table);
                emit("coverage.csv".into(), analytics::coverage_csv(&rows))?;
            }
            ReportKind::Dyads => {
                for &t in &cfg.topics {
                    let rows = analytics::dyad_flows(&assignment, &records, t)?;
                    emit(format!("dyads_topic_{t}.csv"), analytics::dyads_csv(&rows))?;
                }
            }
            ReportKind::Geo => {
                for &t in &cfg.topics {
                    let rows = analytics::geo_counts(&assignment, &records, t)?;
                    emit(format!("geo_topic_{t}.csv"), analytics::geo_csv(&rows))?;
                }
            }
            ReportKind::Trends => {
                let topics: Vec<i32> = if cfg.topics.is_empty() {
                    (0..assignment.n_topics as i32).collect()
                } else {
                    cfg.topics.clone()
                };
                let r = analytics::topic_trends(&assignment, &records, &topics, cfg.normalize)?;
                emit("trends.csv".into(), r.to_csv())?;
            }
        }
    }
    log::info!("report: wrote {}", written.join(", "));
    Ok(written)
}
