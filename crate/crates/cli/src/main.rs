//! `aidtopics`: command-line front end for the topic pipeline.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aidtopics::clustering::Selection;
use aidtopics::corpus::{self, RioMarker};
use aidtopics::embedding::EmbedMethod;
use aidtopics::outliers::Strategy;
use aidtopics::pipeline::{self, stages, PipelineConfig, PipelineError, ReportKind, StageError};
use aidtopics::reduction::ReductionMethod;
use aidtopics::synthetic::{self, SyntheticConfig};
use aidtopics::validity::Space;

#[derive(Parser, Debug)]
#[command(
    name = "aidtopics",
    version,
    about = "Topic clustering for development-finance project descriptions"
)]
struct Cli {
    /// TOML configuration; command-line flags take precedence.
    #[arg(long, global = true, env = "AIDTOPICS_CONFIG")]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "AIDTOPICS_THREADS")]
    threads: Option<usize>,
    /// Seed for every seeded stage.
    #[arg(long, global = true, env = "AIDTOPICS_SEED")]
    seed: Option<u64>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every stage with caching and write a manifest.
    Run(RunArgs),
    /// Write the synthetic demo corpus as a CRS-style CSV.
    Generate(GenerateArgs),
    /// Parse and deduplicate a CRS export.
    Ingest(IngestArgs),
    /// Embed a deduplicated corpus (or import vectors for it).
    Embed(EmbedArgs),
    /// Reduce an EMB1 matrix with UMAP or PCA.
    Reduce(ReduceArgs),
    /// Cluster reduced vectors with HDBSCAN.
    Cluster(ClusterArgs),
    /// Compute validity indices for a labels file.
    Metrics(MetricsArgs),
    /// Reassign outliers and audit each pass.
    ReduceOutliers(OutlierArgs),
    /// Summarise topics and write labeling prompts.
    Label(LabelArgs),
    /// Write one analytics report.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, env = "AIDTOPICS_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "AIDTOPICS_CACHE")]
    cache: Option<PathBuf>,
    #[command(flatten)]
    reduce: ReduceFlags,
    #[arg(long)]
    min_cluster_size: Option<usize>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_docs: Option<usize>,
    #[arg(long)]
    duplicates: Option<usize>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    /// corpus.jsonl from `ingest`.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Import this EMB1 file instead of running the baseline embedder.
    #[arg(long)]
    import: Option<PathBuf>,
    #[arg(long)]
    dims: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct ReduceFlags {
    #[arg(long, value_parser = parse_from_str::<ReductionMethod>)]
    reduce_method: Option<ReductionMethod>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    n_neighbors: Option<usize>,
    #[arg(long)]
    min_dist: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Single-threaded, bit-reproducible layout optimisation.
    #[arg(long, conflicts_with = "parallel")]
    serial: bool,
    /// Lock-free parallel layout optimisation (not bit-reproducible).
    #[arg(long)]
    parallel: bool,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: ReduceFlags,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    min_cluster_size: Option<usize>,
    #[arg(long)]
    min_samples: Option<usize>,
    /// excess_of_mass (eom) or leaf.
    #[arg(long, value_parser = parse_from_str::<Selection>)]
    selection: Option<Selection>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Treat label -1 as a cluster instead of excluding it.
    #[arg(long)]
    include_noise: bool,
    /// Space the vectors come from (recorded in the report).
    #[arg(long, value_parser = parse_from_str::<Space>)]
    space: Option<Space>,
    /// Silhouette sample size (stratified by cluster).
    #[arg(long)]
    sample_size: Option<usize>,
    /// Never sample, whatever the size.
    #[arg(long)]
    exact: bool,
}

#[derive(Args, Debug)]
struct OutlierArgs {
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Vectors for the metrics (defaults to --vectors).
    #[arg(long)]
    metric_vectors: Option<PathBuf>,
    /// Minimum scaled cosine similarity in [0, 1].
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    max_passes: Option<usize>,
    /// centroid_cosine or nearest_member.
    #[arg(long, value_parser = parse_from_str::<Strategy>)]
    strategy: Option<Strategy>,
}

#[derive(Args, Debug)]
struct LabelArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSONL `{topic_id, label}` file to merge.
    #[arg(long)]
    response: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// tracked, amounts, markers, sectors, coverage, dyads, geo or trends.
    #[arg(long, value_parser = parse_from_str::<ReportKind>)]
    report: ReportKind,
    /// records.csv from `ingest`.
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated topic ids; -1 selects the outliers.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    topics: Vec<i32>,
    /// count, commitment or disbursement.
    #[arg(long, value_parser = parse_from_str::<aidtopics::analytics::Measure>)]
    measure: Option<aidtopics::analytics::Measure>,
    /// Rio markers to compare against, e.g. mitigation,adaptation.
    #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<RioMarker>)]
    markers: Vec<RioMarker>,
    /// Count only principal (score 2) markers.
    #[arg(long)]
    principal_only: bool,
    /// Trends as within-year shares instead of raw counts.
    #[arg(long)]
    normalize: Option<bool>,
    /// Purpose-code CSV replacing the bundled table.
    #[arg(long)]
    purpose_codes: Option<PathBuf>,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

#[derive(Debug)]
enum CliError {
    Pipeline(PipelineError),
    Stage(&'static str, StageError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let code = match self {
            CliError::Pipeline(e) => e.exit_code(),
            CliError::Stage(_, e) => e.exit_code(),
        };
        code as u8
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Pipeline(e) => write!(f, "{e}"),
            CliError::Stage(stage, e) => write!(f, "{stage}: {e}"),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Pipeline(e)
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    cfg.apply_seed();
    Ok(cfg)
}

fn apply_reduce_flags(cfg: &mut PipelineConfig, f: &ReduceFlags) {
    let r = &mut cfg.reduction;
    if let Some(m) = f.reduce_method {
        r.method = m;
    }
    if let Some(d) = f.dims {
        r.target_dims = d;
    }
    if let Some(k) = f.n_neighbors {
        r.n_neighbors = k;
    }
    if let Some(m) = f.min_dist {
        r.min_dist = m;
    }
    if let Some(e) = f.epochs {
        r.n_epochs = e;
    }
    if f.serial {
        r.serial = true;
    }
    if f.parallel {
        r.serial = false;
    }
}

/// Runs one stage into `out`, removing the directory again if the stage
/// created it and then failed.
fn stage<T>(
    name: &'static str,
    out: &Path,
    f: impl FnOnce(&Path) -> Result<T, StageError>,
) -> Result<T, CliError> {
    let existed = out.exists();
    std::fs::create_dir_all(out).map_err(|e| CliError::Stage(name, e.into()))?;
    f(out).map_err(|e| {
        if !existed {
            let _ = std::fs::remove_dir_all(out);
        }
        CliError::Stage(name, e)
    })
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Run(a) => {
            if let Some(i) = a.input {
                cfg.input.records = Some(i);
            }
            if let Some(o) = a.out {
                cfg.out = o;
            }
            if let Some(c) = a.cache {
                cfg.cache = c;
            }
            if let Some(m) = a.min_cluster_size {
                cfg.clustering.min_cluster_size = m;
            }
            apply_reduce_flags(&mut cfg, &a.reduce);
            let manifest = pipeline::run_pipeline(&cfg)?;
            println!(
                "{} topics, {} documents; manifest at {}",
                manifest.n_topics,
                manifest.n_documents,
                cfg.out.join(pipeline::MANIFEST_FILE).display()
            );
        }
        Command::Generate(a) => {
            let mut g = SyntheticConfig::default();
            if let Some(n) = a.n_docs {
                g.n_docs = n;
            }
            if let Some(d) = a.duplicates {
                g.n_duplicates = d;
            }
            if let Some(s) = cli.seed {
                g.seed = s;
            }
            let data = synthetic::generate(&g);
            let write = || -> Result<(), StageError> {
                if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
                    std::fs::create_dir_all(parent)?;
                }
                let f = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
                Ok(corpus::write_records(f, &data.records)?)
            };
            write().map_err(|e| CliError::Stage("generate", e))?;
            println!(
                "{} records written to {}",
                data.records.len(),
                a.out.display()
            );
        }
        Command::Ingest(a) => {
            let s = stage("ingest", &a.out, |d| {
                stages::ingest(&a.input, &cfg.schema, d)
            })?;
            println!(
                "{}",
                serde_json::to_string_pretty(&s).expect("serializable")
            );
        }
        Command::Embed(a) => {
            if let Some(d) = a.dims {
                cfg.embedding.dims = d;
            }
            if a.import.is_some() {
                cfg.embedding.method = EmbedMethod::Import;
            }
            let s = stage("embed", &a.out, |d| {
                stages::embed(&a.corpus, &cfg.embedding, a.import.as_deref(), d)
            })?;
            println!(
                "{} x {} written to {}",
                s.n,
                s.d,
                a.out.join(stages::EMBEDDINGS_FILE).display()
            );
        }
        Command::Reduce(a) => {
            apply_reduce_flags(&mut cfg, &a.flags);
            let (n, d) = stage("reduce", &a.out, |d| {
                stages::reduce(&a.input, &cfg.reduction, d)
            })?;
            println!(
                "{n} x {d} written to {}",
                a.out.join(stages::REDUCED_FILE).display()
            );
        }
        Command::Cluster(a) => {
            if let Some(m) = a.min_cluster_size {
                cfg.clustering.min_cluster_size = m;
            }
            if a.min_samples.is_some() {
                cfg.clustering.min_samples = a.min_samples;
            }
            if let Some(s) = a.selection {
                cfg.clustering.selection = s;
            }
            let s = stage("cluster", &a.out, |d| {
                stages::cluster(&a.input, &cfg.clustering, &a.input, &cfg.metrics, d)
            })?;
            println!(
                "K={} outliers={} written to {}",
                s.model.n_clusters,
                s.model.n_outliers,
                a.out.display()
            );
        }
        Command::Metrics(a) => {
            let mut opts = cfg.metrics.clone();
            opts.include_noise |= a.include_noise;
            opts.exact |= a.exact;
            if a.sample_size.is_some() {
                opts.sample_size = a.sample_size;
            }
            if let Some(s) = a.space {
                opts.space = s;
            }
            let report = stages::metrics(&a.vectors, &a.labels, &opts)
                .map_err(|e| CliError::Stage("metrics", e))?;
            let json = serde_json::to_string_pretty(&report).expect("serializable");
            if let Some(out) = &a.out {
                std::fs::write(out, format!("{json}\n"))
                    .map_err(|e| CliError::Stage("metrics", e.into()))?;
            }
            println!("{json}");
        }
        Command::ReduceOutliers(a) => {
            if let Some(t) = a.threshold {
                cfg.outliers.threshold = t;
            }
            if let Some(p) = a.max_passes {
                cfg.outliers.max_passes = p;
            }
            if let Some(s) = a.strategy {
                cfg.outliers.strategy = s;
            }
            let mv = a
                .metric_vectors
                .clone()
                .unwrap_or_else(|| a.vectors.clone());
            let audit = stage("reduce-outliers", &a.out, |d| {
                stages::reduce_outliers(&a.vectors, &mv, &a.labels, &cfg.outliers, &cfg.metrics, d)
            })?;
            print!("{}", aidtopics::outliers::audit_table(&audit));
        }
        Command::Label(a) => {
            let response = a.response.clone().or(cfg.input.labels_response.clone());
            let summaries = stage("label", &a.out, |d| {
                stages::label(&a.corpus, &a.labels, &cfg.labeling, response.as_deref(), d)
            })?;
            for s in &summaries {
                let terms: Vec<&str> = s.top_terms.iter().take(5).map(|t| t.0.as_str()).collect();
                println!(
                    "{:>4}  {:>6}  {}{}",
                    s.topic_id,
                    s.size,
                    terms.join(", "),
                    s.auto_label
                        .as_ref()
                        .map(|l| format!("  [{l}]"))
                        .unwrap_or_default()
                );
            }
        }
        Command::Report(a) => {
            let mut rc = cfg.reports.clone();
            rc.reports = vec![a.report];
            if !a.topics.is_empty() {
                rc.topics = a.topics.clone();
            }
            if let Some(m) = a.measure {
                rc.measure = m;
            }
            if !a.markers.is_empty() {
                rc.markers = a.markers.clone();
            }
            if a.principal_only {
                rc.marker_rule = aidtopics::analytics::MarkerRule::Principal;
            }
            if let Some(n) = a.normalize {
                rc.normalize = n;
            }
            let codes = a.purpose_codes.clone().or(cfg.input.purpose_codes.clone());
            let files = stage("report", &a.out, |d| {
                stages::report(&a.records, &a.corpus, &a.labels, &rc, codes.as_deref(), d)
            })?;
            for f in files {
                println!("{}", a.out.join(f).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("could not configure {n} threads: {e}");
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
