use std::fs;
use std::path::Path;

use aidtopics::corpus::write_records;
use aidtopics::pipeline::{
    cache::LOCK_FILE, run_pipeline, PipelineConfig, PipelineError, MANIFEST_FILE,
};
use aidtopics::synthetic::{generate, SyntheticConfig};

fn small_config(dir: &Path) -> PipelineConfig {
    let synth = generate(&SyntheticConfig {
        n_docs: 600,
        n_duplicates: 30,
        ..SyntheticConfig::default()
    });
    let input = dir.join("records.csv");
    write_records(fs::File::create(&input).unwrap(), &synth.records).unwrap();
    let text = format!(
        r#"
seed = 3
out = "out"
cache = "cache"

[input]
records = "{}"

[embedding]
dims = 64

[reduction]
target_dims = 6
n_epochs = 60

[clustering]
min_cluster_size = 25
"#,
        input.file_name().unwrap().to_string_lossy()
    );
    let cfg_path = dir.join("aidtopics.toml");
    fs::write(&cfg_path, text).unwrap();
    PipelineConfig::load(&cfg_path).unwrap()
}

#[test]
fn second_run_is_a_full_cache_hit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let first = run_pipeline(&cfg).unwrap();
    assert!(!first.full_cache_hit);
    assert!(first.n_topics >= 2);
    assert!(dir.path().join("out").join(MANIFEST_FILE).is_file());
    assert!(!dir.path().join("cache").join(LOCK_FILE).exists());

    let second = run_pipeline(&cfg).unwrap();
    assert!(second.full_cache_hit);
    assert_eq!(first.hashes(), second.hashes());
}

#[test]
fn downstream_change_reuses_upstream_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    run_pipeline(&cfg).unwrap();
    cfg.outliers.threshold = 0.9;
    let m = run_pipeline(&cfg).unwrap();
    for stage in ["ingest", "embed", "reduce", "cluster"] {
        assert!(m.stage(stage).unwrap().cached, "{stage} should be cached");
    }
    assert!(!m.stage("reduce-outliers").unwrap().cached);

    cfg.clustering.min_cluster_size = 20;
    let m = run_pipeline(&cfg).unwrap();
    for stage in ["ingest", "embed", "reduce"] {
        assert!(m.stage(stage).unwrap().cached, "{stage} should be cached");
    }
    for stage in ["cluster", "reduce-outliers", "label", "report"] {
        assert!(!m.stage(stage).unwrap().cached, "{stage} should rerun");
    }
}

#[test]
fn held_lock_refuses_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    fs::create_dir_all(&cfg.cache).unwrap();
    fs::write(cfg.cache.join(LOCK_FILE), "1\n").unwrap();
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, PipelineError::Locked(_)), "{err}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let err = PipelineConfig::from_toml("[clustering]\nmin_cluster_sise = 3\n").unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn missing_input_is_reported_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.input.records = Some(dir.path().join("absent.csv"));
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(!cfg.cache.join("embed").exists());
}
