//! Pipeline-level behavior: stage toggles, dependency failures, manifest
//! contents, and cache reuse across runs.

use raterlens::embed::{EmbeddingProviderConfig, ProviderKind};
use raterlens::fixtures::{generate, FixtureSpec};
use raterlens::pipeline::{run_analyze, run_embed_only, RunConfig, StageToggles};
use raterlens::report::RunManifest;

fn fixture_config(root: &std::path::Path) -> RunConfig {
    let corpus_dir = root.join("corpus");
    generate(&FixtureSpec::default(), &corpus_dir).unwrap();
    RunConfig::new(
        corpus_dir,
        root.join("run"),
        EmbeddingProviderConfig::fallback(256),
    )
}

#[test]
fn agreement_only_run_emits_tables_and_no_figures() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = fixture_config(dir.path());
    config.stages = StageToggles::parse_list("agreement").unwrap();
    let summary = run_analyze(&config).unwrap();
    assert_eq!(summary.tables, 2); // consistency.csv + consistency.json
    assert_eq!(summary.figures, 0);
    assert!(config.out_dir.join("tables/consistency.csv").exists());
    assert!(!config.out_dir.join("cache/embeddings.jsonl").exists());
}

#[test]
fn missing_embeddings_fail_naming_the_embed_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = fixture_config(dir.path());
    config.provider.kind = ProviderKind::File; // nothing cached yet
    let err = run_analyze(&config).unwrap_err();
    assert_eq!(err.stage, "embed");
    assert_eq!(err.kind.exit_code(), 4);
    // partial run keeps a manifest marking incompleteness
    let manifest = RunManifest::load(&config.out_dir.join("manifest.json")).unwrap();
    assert!(manifest.incomplete);
    assert!(manifest.notes.iter().any(|n| n.contains("embed")));
}

#[test]
fn manifest_registers_every_artifact_with_matching_digest() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path());
    run_analyze(&config).unwrap();
    let manifest = RunManifest::load(&config.out_dir.join("manifest.json")).unwrap();
    assert!(!manifest.incomplete);
    assert!(!manifest.artifacts.is_empty());
    for artifact in &manifest.artifacts {
        let bytes = std::fs::read(config.out_dir.join(&artifact.path)).unwrap();
        assert_eq!(
            raterlens::ioutil::sha256_hex(&bytes),
            artifact.sha256,
            "digest mismatch for {}",
            artifact.path
        );
    }
    // config snapshot echoes the provider and conventions
    assert_eq!(manifest.config["provider"]["dim"], 256);
    assert_eq!(manifest.config["embed_preprocessed"], true);
    assert_eq!(manifest.config["cov_divisor"], "n");
    // run id is derived from config + inputs, so it is stable across runs
    let again_dir = tempfile::tempdir().unwrap();
    let mut config2 = config.clone();
    config2.out_dir = again_dir.path().join("run");
    run_analyze(&config2).unwrap();
    let manifest2 = RunManifest::load(&config2.out_dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.run_id, manifest2.run_id);
}

#[test]
fn second_run_reuses_the_cache_with_zero_provider_requests() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path());
    run_analyze(&config).unwrap();
    let manifest = RunManifest::load(&config.out_dir.join("manifest.json")).unwrap();
    let first_embed_note = manifest
        .notes
        .iter()
        .find(|n| n.starts_with("embeddings:"))
        .unwrap()
        .clone();
    assert!(first_embed_note.contains("0 cached"));

    // rerun into the same directory: everything served from cache
    run_analyze(&config).unwrap();
    let manifest = RunManifest::load(&config.out_dir.join("manifest.json")).unwrap();
    let second_embed_note = manifest
        .notes
        .iter()
        .find(|n| n.starts_with("embeddings:"))
        .unwrap();
    assert!(
        second_embed_note.contains("0 fetched, 0 provider requests"),
        "got: {second_embed_note}"
    );
}

#[test]
fn embed_only_populates_cache_for_file_provider_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = fixture_config(dir.path());
    let report = run_embed_only(&config).unwrap();
    assert!(report.fetched > 0);
    assert!(config.out_dir.join("cache/embeddings.jsonl").exists());
    // now a file-provider analysis succeeds entirely offline
    config.provider.kind = ProviderKind::File;
    let summary = run_analyze(&config).unwrap();
    assert!(summary.figures > 0);
}

#[test]
fn reference_rater_must_exist() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = fixture_config(dir.path());
    config.reference_rater = Some("nobody".into());
    let err = run_analyze(&config).unwrap_err();
    assert_eq!(err.kind.exit_code(), 3);
}
