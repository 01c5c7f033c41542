use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hallubench_core::config::{PipelineConfig, Settings};
use hallubench_core::dataset::{read_jsonl, validate_dataset};
use hallubench_core::model::{PatternKind, QRSample};
use hallubench_core::pipeline::{run_pipeline, Providers, MANIFEST, REVIEWED};
use hallubench_core::providers::{MockProvider, ReplayProvider, TextProvider, Transcript};
use hallubench_core::Error;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn config(out: &Path) -> PipelineConfig {
    let s = Settings::load(&fixtures().join("pipeline.ini")).unwrap();
    let mut cfg = PipelineConfig::from_settings(&s, &fixtures()).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

#[test]
fn full_mock_run() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_pipeline(&config(dir.path()), &Providers::mock()).unwrap();
    let names: Vec<&str> = m.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["sample", "synthesize", "screen", "review", "evaluate"]);
    assert!(m.stage("synthesize").unwrap().counts["samples"] > 0);
    assert!(m.inputs.contains_key("triples") && m.inputs.contains_key("claims"));
    assert!(dir.path().join(MANIFEST).exists());

    let data: Vec<QRSample> = read_jsonl(&dir.path().join(REVIEWED)).unwrap();
    let mut per_pattern: BTreeMap<PatternKind, usize> = BTreeMap::new();
    for s in &data {
        *per_pattern.entry(s.pattern).or_insert(0) += 1;
    }
    for p in PatternKind::ALL {
        assert!(per_pattern.get(&p).copied().unwrap_or(0) >= 2, "{p}: {per_pattern:?}");
    }
    assert!(validate_dataset(&dir.path().join(REVIEWED)).unwrap().is_clean());
}

#[test]
fn rerun_is_hash_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_pipeline(&config(a.path()), &Providers::mock()).unwrap();
    let mb = run_pipeline(&config(b.path()), &Providers::mock()).unwrap();
    assert_eq!(ma.output_hashes(), mb.output_hashes());
    assert_eq!(ma.inputs, mb.inputs);
}

#[test]
fn missing_triples_names_sample_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.triples = dir.path().join("absent.tsv");
    let err = run_pipeline(&cfg, &Providers::mock()).unwrap_err();
    assert_eq!(err.stage, "sample");
    assert!(matches!(err.source, Error::Input { .. }));
    assert!(err.manifest.stages.is_empty());
    let written = std::fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
    assert!(written.contains("\"stage\": \"sample\""));
}

#[test]
fn strict_replay_miss_aborts_synthesis() {
    let dir = tempfile::tempdir().unwrap();
    let mut providers = Providers::mock();
    providers.generator = Arc::new(ReplayProvider::strict(Transcript::default()));
    let err = run_pipeline(&config(dir.path()), &providers).unwrap_err();
    assert_eq!(err.stage, "synthesize");
    assert!(matches!(err.source, Error::TranscriptMiss(_)));
    assert_eq!(err.manifest.stages.len(), 1);
}

fn recording(name: &str, log: &Path) -> Arc<dyn TextProvider> {
    Arc::new(
        ReplayProvider::recording(Box::new(MockProvider::new(name)), Transcript::default())
            .with_log(log)
            .unwrap()
            .with_name(name),
    )
}

fn replaying(name: &str, log: &Path) -> Arc<dyn TextProvider> {
    Arc::new(ReplayProvider::strict(Transcript::load(log).unwrap()).with_name(name))
}

#[test]
fn record_then_replay_matches() {
    let logs = tempfile::tempdir().unwrap();
    let roles = ["generator", "judge"];
    let providers = |f: fn(&str, &Path) -> Arc<dyn TextProvider>| {
        let mut p = Providers::mock();
        p.generator = f(roles[0], &logs.path().join("generator.jsonl"));
        p.judge = f(roles[1], &logs.path().join("judge.jsonl"));
        p
    };
    let a = tempfile::tempdir().unwrap();
    let recorded = run_pipeline(&config(a.path()), &providers(recording)).unwrap();
    let b = tempfile::tempdir().unwrap();
    let replayed = run_pipeline(&config(b.path()), &providers(replaying)).unwrap();
    assert_eq!(recorded.output_hashes(), replayed.output_hashes());
}

#[test]
fn undecided_review_stops_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.review.simulate = false;
    let err = run_pipeline(&cfg, &Providers::mock()).unwrap_err();
    assert_eq!(err.stage, "evaluate");
    let review = err.manifest.stage("review").unwrap();
    assert_eq!(review.counts["pending"], review.counts["tasks"]);
}

#[test]
fn disabled_stages_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.stages = ["sample".to_string()].into();
    let m = run_pipeline(&cfg, &Providers::mock()).unwrap();
    assert_eq!(m.stages.len(), 1);
    assert!(!dir.path().join(REVIEWED).exists());
}
