//! End-to-end orchestration: ingest -> (grade) -> prep -> embed -> analyze
//! -> report, with stage-tagged errors and a manifest for every run.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus_dir, Corpus, RaterKind, ScoreScale};
use crate::embed::{
    embed_batch, BatchReport, EmbedTextMode, EmbeddingProviderConfig, EmbeddingStore,
};
use crate::ioutil::sha256_hex;
use crate::raterclient::{grade_corpus, GradeReport, ModelConfig, Rubric};
use crate::reduce::{matched_score_projection, CovDivisor, ProjectionOutcome};
use crate::report::{
    consistency_table, render_heatmap, render_pca_scatter, similarity_tables, ColorRamp,
    InputDigest, RunDirectory, RunManifest,
};
use crate::similarity::{
    pairwise_rationale_similarity, similarity_heatmap_matrix, SimilarityError, StdMode,
};
use crate::textprep::{load_stopword_file, PrepConfig};

/// Which analysis stages run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageToggles {
    pub agreement: bool,
    pub similarity: bool,
    pub pca: bool,
    pub heatmaps: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            agreement: true,
            similarity: true,
            pca: true,
            heatmaps: true,
        }
    }
}

impl StageToggles {
    pub fn none() -> Self {
        Self {
            agreement: false,
            similarity: false,
            pca: false,
            heatmaps: false,
        }
    }

    /// Parse a comma-separated stage list, e.g. `agreement,pca`.
    pub fn parse_list(list: &str) -> Result<Self, String> {
        let mut toggles = Self::none();
        for stage in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match stage {
                "agreement" => toggles.agreement = true,
                "similarity" => toggles.similarity = true,
                "pca" => toggles.pca = true,
                "heatmaps" => toggles.heatmaps = true,
                other => return Err(format!("unknown stage {other:?}")),
            }
        }
        Ok(toggles)
    }

    fn needs_embeddings(&self) -> bool {
        self.similarity || self.pca || self.heatmaps
    }
}

fn default_true() -> bool {
    true
}

fn default_seed() -> u64 {
    7
}

fn default_std_mode() -> StdMode {
    StdMode::Sample
}

fn default_cov_divisor() -> CovDivisor {
    CovDivisor::N
}

/// Full configuration of an analysis run; serialized verbatim into the
/// manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub scale: ScoreScale,
    /// Anchor rater for similarity/PCA/heatmaps; defaults to the human
    /// rater with the most rationales.
    #[serde(default)]
    pub reference_rater: Option<String>,
    /// Embed the preprocessed rationale text (default) or the raw text.
    #[serde(default = "default_true")]
    pub embed_preprocessed: bool,
    #[serde(default)]
    pub stopwords_file: Option<PathBuf>,
    #[serde(default)]
    pub domain_stopwords_file: Option<PathBuf>,
    #[serde(default)]
    pub extra_domain_stopwords: Vec<String>,
    pub provider: EmbeddingProviderConfig,
    #[serde(default)]
    pub stages: StageToggles,
    #[serde(default = "default_true")]
    pub include_reference_points: bool,
    #[serde(default = "default_std_mode")]
    pub std_mode: StdMode,
    #[serde(default = "default_cov_divisor")]
    pub cov_divisor: CovDivisor,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl RunConfig {
    pub fn new(corpus_dir: PathBuf, out_dir: PathBuf, provider: EmbeddingProviderConfig) -> Self {
        Self {
            corpus_dir,
            out_dir,
            scale: ScoreScale::default(),
            reference_rater: None,
            embed_preprocessed: true,
            stopwords_file: None,
            domain_stopwords_file: None,
            extra_domain_stopwords: Vec::new(),
            provider,
            stages: StageToggles::default(),
            include_reference_points: true,
            std_mode: default_std_mode(),
            cov_divisor: default_cov_divisor(),
            seed: default_seed(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let content = std::fs::read_to_string(path).map_err(|e| PipelineError {
            stage: "config".into(),
            kind: ErrorKind::Config,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        toml::from_str(&content).map_err(|e| PipelineError {
            stage: "config".into(),
            kind: ErrorKind::Config,
            message: format!("cannot parse {}: {e}", path.display()),
        })
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let config_err = |message: String| PipelineError {
            stage: "config".into(),
            kind: ErrorKind::Config,
            message,
        };
        if self.corpus_dir.as_os_str().is_empty() {
            return Err(config_err("corpus_dir is required".into()));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(config_err("out_dir is required".into()));
        }
        if self.scale.min_score >= self.scale.max_score {
            return Err(config_err(format!(
                "invalid scale [{}, {}]",
                self.scale.min_score, self.scale.max_score
            )));
        }
        self.provider
            .validate()
            .map_err(|e| config_err(e.to_string()))
    }
}

/// Coarse failure class, mapped to distinct process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Input,
    Provider,
    Analysis,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Input => 3,
            ErrorKind::Provider => 4,
            ErrorKind::Analysis => 5,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage}: {message}")]
pub struct PipelineError {
    pub stage: String,
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalyzeSummary {
    pub run_dir: PathBuf,
    pub tables: usize,
    pub figures: usize,
    pub notes: Vec<String>,
}

fn build_prep_config(config: &RunConfig) -> Result<PrepConfig, PipelineError> {
    let input_err = |message: String| PipelineError {
        stage: "prep".into(),
        kind: ErrorKind::Input,
        message,
    };
    let mut prep = match (&config.stopwords_file, &config.domain_stopwords_file) {
        (None, None) => PrepConfig::default_english(),
        (stop, domain) => {
            let stopwords = match stop {
                Some(path) => load_stopword_file(path).map_err(|e| input_err(e.to_string()))?,
                None => PrepConfig::default_english().stopwords().clone(),
            };
            let domain_words = match domain {
                Some(path) => load_stopword_file(path).map_err(|e| input_err(e.to_string()))?,
                None => PrepConfig::default_english().domain_stopwords().clone(),
            };
            PrepConfig::new(stopwords, domain_words)
        }
    };
    if !config.extra_domain_stopwords.is_empty() {
        prep = prep.with_extra_domain_stopwords(config.extra_domain_stopwords.iter());
    }
    Ok(prep)
}

fn resolve_reference(corpus: &Corpus, config: &RunConfig) -> Result<Option<String>, PipelineError> {
    if let Some(reference) = &config.reference_rater {
        if corpus.rater(reference).is_none() {
            return Err(PipelineError {
                stage: "corpus".into(),
                kind: ErrorKind::Input,
                message: format!("reference rater {reference:?} not found in corpus"),
            });
        }
        return Ok(Some(reference.clone()));
    }
    // Most rationales wins; ties go to the lowest rater id.
    let mut best: Option<(usize, String)> = None;
    for rater_id in corpus.rater_ids_of_kind(RaterKind::Human) {
        let rationales = corpus
            .ratings_by(&rater_id)
            .filter(|r| r.rationale.is_some())
            .count();
        let better = match &best {
            None => true,
            Some((count, _)) => rationales > *count,
        };
        if better {
            best = Some((rationales, rater_id));
        }
    }
    Ok(best.filter(|(count, _)| *count > 0).map(|(_, id)| id))
}

/// Emit candidate texts for every rationale in the corpus, in the exact
/// form the pipeline embeds.
fn rationale_texts(corpus: &Corpus, mode: EmbedTextMode<'_>) -> Vec<String> {
    let mut texts = BTreeSet::new();
    for rating in corpus.ratings() {
        if let Some(raw) = rating.rationale.as_deref() {
            let text = mode.embedded_text(raw);
            if !text.is_empty() {
                texts.insert(text);
            }
        }
    }
    texts.into_iter().collect()
}

fn embed_stage(
    corpus: &Corpus,
    mode: EmbedTextMode<'_>,
    provider: &EmbeddingProviderConfig,
    cache_path: &Path,
) -> Result<(EmbeddingStore, BatchReport), PipelineError> {
    let provider_err = |message: String| PipelineError {
        stage: "embed".into(),
        kind: ErrorKind::Provider,
        message,
    };
    let mut store = if cache_path.exists() {
        EmbeddingStore::load(cache_path, provider.dim).map_err(|e| provider_err(e.to_string()))?
    } else {
        EmbeddingStore::new(provider.dim)
    };
    let texts = rationale_texts(corpus, mode);
    let report =
        embed_batch(&texts, provider, &mut store).map_err(|e| provider_err(e.to_string()))?;
    store
        .save(cache_path)
        .map_err(|e| provider_err(e.to_string()))?;
    Ok((store, report))
}

fn input_digests(config: &RunConfig) -> Result<Vec<InputDigest>, PipelineError> {
    let mut digests = Vec::new();
    for name in ["essays.jsonl", "raters.jsonl", "ratings.jsonl"] {
        let path = config.corpus_dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| PipelineError {
            stage: "corpus".into(),
            kind: ErrorKind::Input,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        digests.push(InputDigest {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
        });
    }
    Ok(digests)
}

fn write_manifest(
    run: &RunDirectory,
    config: &RunConfig,
    inputs: &[InputDigest],
    created_at: &str,
    notes: &[String],
    incomplete: bool,
) -> Result<(), PipelineError> {
    let config_json = serde_json::to_value(config).expect("config serializes");
    // The id covers the analytic config and input content, not where the
    // corpus lives or where artifacts land.
    let mut id_config = config_json.clone();
    if let Some(map) = id_config.as_object_mut() {
        map.remove("corpus_dir");
        map.remove("out_dir");
    }
    let mut id_material = serde_json::to_string(&id_config).expect("value serializes");
    for input in inputs {
        id_material.push_str(&input.sha256);
    }
    let manifest = RunManifest {
        run_id: sha256_hex(id_material.as_bytes())[..16].to_string(),
        created_at: created_at.to_string(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        config: config_json,
        inputs: inputs.to_vec(),
        artifacts: run.artifacts().to_vec(),
        notes: notes.to_vec(),
        incomplete,
    };
    manifest
        .save(&run.root().join("manifest.json"))
        .map_err(|e| PipelineError {
            stage: "report".into(),
            kind: ErrorKind::Analysis,
            message: e.to_string(),
        })
}

/// Run the enabled analysis stages in dependency order and emit all tables,
/// figures, and the manifest into the run directory.
pub fn run_analyze(config: &RunConfig) -> Result<AnalyzeSummary, PipelineError> {
    config.validate()?;
    let created_at = chrono::Utc::now().to_rfc3339();
    let corpus = load_corpus_dir(&config.corpus_dir, config.scale).map_err(|e| PipelineError {
        stage: "corpus".into(),
        kind: ErrorKind::Input,
        message: e.to_string(),
    })?;
    let inputs = input_digests(config)?;
    let mut run = RunDirectory::create(&config.out_dir).map_err(|e| PipelineError {
        stage: "report".into(),
        kind: ErrorKind::Analysis,
        message: e.to_string(),
    })?;

    let mut notes = Vec::new();
    let outcome = analyze_stages(config, &corpus, &mut run, &mut notes);
    let incomplete = outcome.is_err();
    if let Err(err) = &outcome {
        notes.push(format!("run incomplete; stage {} failed: {}", err.stage, err.message));
    }
    write_manifest(&run, config, &inputs, &created_at, &notes, incomplete)?;
    outcome?;

    let tables = run
        .artifacts()
        .iter()
        .filter(|a| a.path.starts_with("tables/"))
        .count();
    let figures = run
        .artifacts()
        .iter()
        .filter(|a| a.path.starts_with("figures/"))
        .count();
    Ok(AnalyzeSummary {
        run_dir: config.out_dir.clone(),
        tables,
        figures,
        notes,
    })
}

fn analyze_stages(
    config: &RunConfig,
    corpus: &Corpus,
    run: &mut RunDirectory,
    notes: &mut Vec<String>,
) -> Result<(), PipelineError> {
    let analysis_err = |stage: &str, message: String| PipelineError {
        stage: stage.into(),
        kind: ErrorKind::Analysis,
        message,
    };
    let prep = build_prep_config(config)?;
    let mode = if config.embed_preprocessed {
        EmbedTextMode::Preprocessed(&prep)
    } else {
        EmbedTextMode::Raw
    };
    notes.push(format!("embedding text mode: {}", mode.describe()));
    notes.push(format!(
        "covariance divisor: {:?}; std mode: {:?}; weight indexing: full scale",
        config.cov_divisor, config.std_mode
    ));

    let reference = resolve_reference(corpus, config)?;
    let store = if config.stages.needs_embeddings() {
        let (store, report) = embed_stage(corpus, mode, &config.provider, &run.cache_path())?;
        notes.push(format!(
            "embeddings: {} requested, {} cached, {} fetched, {} provider requests",
            report.requested, report.cached, report.fetched, report.provider_requests
        ));
        Some(store)
    } else {
        None
    };

    if config.stages.agreement {
        let references = corpus.rater_ids_of_kind(RaterKind::Human);
        let (table, table_notes) =
            consistency_table(corpus, &references).map_err(|e| analysis_err("agreement", e.to_string()))?;
        notes.extend(table_notes);
        run.write_artifact("tables/consistency.csv", table.to_csv().as_bytes())
            .map_err(|e| analysis_err("agreement", e.to_string()))?;
        run.write_artifact("tables/consistency.json", table.to_json().as_bytes())
            .map_err(|e| analysis_err("agreement", e.to_string()))?;
    }

    let needs_reference = config.stages.similarity || config.stages.pca || config.stages.heatmaps;
    let reference = match (needs_reference, reference) {
        (true, None) => {
            return Err(PipelineError {
                stage: "similarity".into(),
                kind: ErrorKind::Input,
                message: "no reference rater with rationales available".into(),
            })
        }
        (_, reference) => reference,
    };

    if config.stages.similarity {
        let store = store.as_ref().expect("embeddings present");
        let reference = reference.as_deref().expect("reference resolved");
        let mut model_records = Vec::new();
        let mut skip_payload = Vec::new();
        for rater_id in corpus.rater_ids_of_kind(RaterKind::Llm) {
            let pairwise =
                pairwise_rationale_similarity(corpus, store, &rater_id, reference, mode)
                    .map_err(|e| analysis_err("similarity", e.to_string()))?;
            let label = corpus.rater(&rater_id).expect("rater exists").label.clone();
            if !pairwise.skipped.is_empty() {
                notes.push(format!(
                    "similarity: {} essays skipped for {rater_id} vs {reference}",
                    pairwise.skipped.len()
                ));
            }
            skip_payload.push(serde_json::json!({
                "rater_id": rater_id,
                "records": pairwise.records,
                "skipped": pairwise.skipped,
            }));
            model_records.push((label, pairwise.records));
        }
        for table in similarity_tables(&model_records, &[0, 1, 2], config.std_mode) {
            run.write_artifact(
                &format!("tables/{}.csv", table.name),
                table.to_csv().as_bytes(),
            )
            .map_err(|e| analysis_err("similarity", e.to_string()))?;
            run.write_artifact(
                &format!("tables/{}.json", table.name),
                table.to_json().as_bytes(),
            )
            .map_err(|e| analysis_err("similarity", e.to_string()))?;
        }
        let mut records_json = serde_json::to_string_pretty(&skip_payload).expect("serializes");
        records_json.push('\n');
        run.write_artifact("tables/similarity_records.json", records_json.as_bytes())
            .map_err(|e| analysis_err("similarity", e.to_string()))?;
    }

    if config.stages.pca {
        let store = store.as_ref().expect("embeddings present");
        let reference = reference.as_deref().expect("reference resolved");
        for level in config.scale.scores() {
            let outcome = matched_score_projection(
                corpus,
                store,
                level,
                reference,
                config.include_reference_points,
                mode,
            )
            .map_err(|e| analysis_err("pca", e.to_string()))?;
            match outcome {
                ProjectionOutcome::Points(points) => {
                    let svg = render_pca_scatter(&points, level)
                        .map_err(|e| analysis_err("pca", e.to_string()))?;
                    run.write_artifact(&format!("figures/pca_score_{level}.svg"), svg.as_bytes())
                        .map_err(|e| analysis_err("pca", e.to_string()))?;
                }
                ProjectionOutcome::InsufficientData { available } => {
                    notes.push(format!(
                        "pca: insufficient data at score {level} ({available} points); figure skipped"
                    ));
                }
            }
        }
    }

    if config.stages.heatmaps {
        let store = store.as_ref().expect("embeddings present");
        let reference = reference.as_deref().expect("reference resolved");
        let ramp = ColorRamp::default();
        for rater_id in corpus.rater_ids_of_kind(RaterKind::Llm) {
            match similarity_heatmap_matrix(corpus, store, &rater_id, reference, mode) {
                Ok(matrix) => {
                    let svg = render_heatmap(&matrix, &ramp)
                        .map_err(|e| analysis_err("heatmaps", e.to_string()))?;
                    run.write_artifact(
                        &format!("figures/heatmap_{rater_id}.svg"),
                        svg.as_bytes(),
                    )
                    .map_err(|e| analysis_err("heatmaps", e.to_string()))?;
                }
                Err(SimilarityError::NoOverlap) => {
                    notes.push(format!(
                        "heatmaps: no rationale overlap for {rater_id}; figure skipped"
                    ));
                }
                Err(other) => return Err(analysis_err("heatmaps", other.to_string())),
            }
        }
    }
    Ok(())
}

/// Populate a run directory's embedding cache without running analyses.
pub fn run_embed_only(config: &RunConfig) -> Result<BatchReport, PipelineError> {
    config.validate()?;
    let corpus = load_corpus_dir(&config.corpus_dir, config.scale).map_err(|e| PipelineError {
        stage: "corpus".into(),
        kind: ErrorKind::Input,
        message: e.to_string(),
    })?;
    let run = RunDirectory::create(&config.out_dir).map_err(|e| PipelineError {
        stage: "embed".into(),
        kind: ErrorKind::Provider,
        message: e.to_string(),
    })?;
    let prep = build_prep_config(config)?;
    let mode = if config.embed_preprocessed {
        EmbedTextMode::Preprocessed(&prep)
    } else {
        EmbedTextMode::Raw
    };
    let (_, report) = embed_stage(&corpus, mode, &config.provider, &run.cache_path())?;
    Ok(report)
}

/// Grading configuration file: rubric path plus one entry per model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradeConfig {
    pub rubric: PathBuf,
    pub models: Vec<ModelConfig>,
}

impl GradeConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let content = std::fs::read_to_string(path).map_err(|e| PipelineError {
            stage: "config".into(),
            kind: ErrorKind::Config,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        toml::from_str(&content).map_err(|e| PipelineError {
            stage: "config".into(),
            kind: ErrorKind::Config,
            message: format!("cannot parse {}: {e}", path.display()),
        })
    }
}

/// Load the corpus, validate the rubric, and grade every pending cell.
///
/// Alongside the ratings file this writes `<out>.manifest.json` recording
/// the model configs (temperature included, secrets excluded as only env
/// var names are ever stored), the rubric digest, and per-run counts.
pub fn run_grade(
    corpus_dir: &Path,
    scale: ScoreScale,
    rubric_path: &Path,
    models: &[ModelConfig],
    out_path: &Path,
    log_path: &Path,
    resume: bool,
) -> Result<GradeReport, PipelineError> {
    let corpus = load_corpus_dir(corpus_dir, scale).map_err(|e| PipelineError {
        stage: "corpus".into(),
        kind: ErrorKind::Input,
        message: e.to_string(),
    })?;
    let rubric = Rubric::load(rubric_path).map_err(|e| PipelineError {
        stage: "grade".into(),
        kind: ErrorKind::Config,
        message: e.to_string(),
    })?;
    let report = grade_corpus(&corpus, &rubric, models, out_path, log_path, resume).map_err(
        |e| {
            let kind = match &e {
                crate::raterclient::ClientError::MissingCredential(_)
                | crate::raterclient::ClientError::Config(_)
                | crate::raterclient::ClientError::RubricInvalid(_)
                | crate::raterclient::ClientError::OutputExists { .. } => ErrorKind::Config,
                crate::raterclient::ClientError::Io { .. } => ErrorKind::Input,
                _ => ErrorKind::Provider,
            };
            PipelineError {
                stage: "grade".into(),
                kind,
                message: e.to_string(),
            }
        },
    )?;

    let rubric_bytes = std::fs::read(rubric_path).map_err(|e| PipelineError {
        stage: "grade".into(),
        kind: ErrorKind::Input,
        message: format!("cannot digest {}: {e}", rubric_path.display()),
    })?;
    let manifest = serde_json::json!({
        "created_at": chrono::Utc::now().to_rfc3339(),
        "rubric": { "path": rubric_path.display().to_string(), "sha256": sha256_hex(&rubric_bytes) },
        "models": models,
        "graded": report.graded,
        "skipped_existing": report.skipped_existing,
        "requests": report.requests,
        "failures": report.failures,
    });
    let mut manifest_path = out_path.as_os_str().to_owned();
    manifest_path.push(".manifest.json");
    let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    body.push('\n');
    crate::ioutil::atomic_write(Path::new(&manifest_path), body.as_bytes()).map_err(|e| {
        PipelineError {
            stage: "grade".into(),
            kind: ErrorKind::Input,
            message: e.to_string(),
        }
    })?;
    Ok(report)
}
