//! Command-line surface for the rater-agreement toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use raterlens::corpus::{load_corpus_dir, ScoreScale};
use raterlens::embed::{EmbeddingProviderConfig, ProviderKind};
use raterlens::fixtures::{generate, FixtureSpec};
use raterlens::pipeline::{
    run_analyze, run_grade, ErrorKind, GradeConfig, PipelineError, RunConfig, StageToggles,
};
use raterlens::raterclient::{ChatProviderKind, ModelConfig};
use raterlens::selftest::{self, Hooks};
use raterlens::textprep::PrepConfig;

#[derive(Parser)]
#[command(
    name = "raterlens",
    version,
    about = "Agreement and rationale-similarity analytics for human and LLM essay raters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScaleArgs {
    /// Minimum rubric score.
    #[arg(long, default_value_t = 0)]
    scale_min: i32,
    /// Maximum rubric score.
    #[arg(long, default_value_t = 6)]
    scale_max: i32,
}

impl ScaleArgs {
    fn build(&self) -> Result<ScoreScale, PipelineError> {
        ScoreScale::new(self.scale_min, self.scale_max).map_err(|e| PipelineError {
            stage: "config".into(),
            kind: ErrorKind::Config,
            message: e.to_string(),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a corpus; optionally rewrite it normalized.
    Ingest {
        /// Directory holding essays.jsonl, raters.jsonl, ratings.jsonl.
        #[arg(long)]
        corpus: PathBuf,
        /// Rewrite the validated corpus into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        scale: ScaleArgs,
    },
    /// Generate the deterministic synthetic corpus.
    Fixture {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        essays: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grade a corpus with one or more chat models.
    Grade {
        #[arg(long)]
        corpus: PathBuf,
        /// Grading config (rubric path + [[models]] entries).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Rubric file; overrides the config value.
        #[arg(long)]
        rubric: Option<PathBuf>,
        /// Ratings output file.
        #[arg(long)]
        out: PathBuf,
        /// Attempt log file (defaults to <out>.log.jsonl).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Skip cells already present in the output file.
        #[arg(long)]
        resume: bool,
        /// Grade with the built-in offline stub instead of real endpoints.
        #[arg(long)]
        stub: bool,
        /// Comma-separated rater ids for --stub without a config file.
        #[arg(long)]
        models: Option<String>,
        #[command(flatten)]
        scale: ScaleArgs,
    },
    /// Preprocess every rationale and write the cleaned text.
    Prep {
        #[arg(long)]
        corpus: PathBuf,
        /// Output JSONL file of {essay_id, rater_id, clean}.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        domain_stopwords: Option<PathBuf>,
        #[command(flatten)]
        scale: ScaleArgs,
    },
    /// Populate the embedding cache for a corpus.
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        /// Run directory; the store lands in <out>/cache/embeddings.jsonl.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_provider)]
        provider: ProviderKind,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Embed raw rationale text instead of the preprocessed form.
        #[arg(long)]
        raw: bool,
        #[command(flatten)]
        scale: ScaleArgs,
    },
    /// Run the full analysis pipeline and emit tables, figures, manifest.
    Analyze {
        /// TOML config file; flags below override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        reference_rater: Option<String>,
        #[arg(long, value_parser = parse_provider)]
        provider: Option<ProviderKind>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        endpoint: Option<String>,
        /// Comma-separated stage list: agreement,similarity,pca,heatmaps.
        #[arg(long)]
        stages: Option<String>,
        /// Reuse the existing embedding cache in the run directory.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the embedded oracle suites.
    Selftest,
}

fn parse_provider(value: &str) -> Result<ProviderKind, String> {
    match value {
        "file" => Ok(ProviderKind::File),
        "http" => Ok(ProviderKind::Http),
        "fallback" => Ok(ProviderKind::Fallback),
        other => Err(format!("unknown provider {other:?} (file|http|fallback)")),
    }
}

fn fail(err: PipelineError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.kind.exit_code() as u8)
}

fn input_error(message: String) -> PipelineError {
    PipelineError {
        stage: "corpus".into(),
        kind: ErrorKind::Input,
        message,
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Ingest { corpus, out, scale } => {
            let scale = match scale.build() {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let loaded = match load_corpus_dir(&corpus, scale) {
                Ok(c) => c,
                Err(e) => return fail(input_error(e.to_string())),
            };
            println!(
                "corpus ok: {} essays, {} raters, {} ratings on [{}, {}]",
                loaded.essays().len(),
                loaded.raters().len(),
                loaded.ratings().len(),
                scale.min_score,
                scale.max_score
            );
            if let Some(out) = out {
                if let Err(e) = loaded.save(&out) {
                    return fail(input_error(e.to_string()));
                }
                println!("normalized corpus written to {}", out.display());
            }
            ExitCode::SUCCESS
        }
        Command::Fixture { seed, essays, out } => {
            let spec = FixtureSpec {
                seed,
                n_essays: essays,
                ..FixtureSpec::default()
            };
            match generate(&spec, &out) {
                Ok(fixture) => {
                    println!(
                        "fixture written to {}: {} essays, {} raters, {} ratings (seed {seed})",
                        out.display(),
                        fixture.corpus.essays().len(),
                        fixture.corpus.raters().len(),
                        fixture.corpus.ratings().len()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(input_error(e.to_string())),
            }
        }
        Command::Grade {
            corpus,
            config,
            rubric,
            out,
            log,
            resume,
            stub,
            models,
            scale,
        } => {
            let scale = match scale.build() {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let (rubric_path, mut model_list) = match (&config, &models) {
                (Some(path), _) => {
                    let grade_config = match GradeConfig::load(path) {
                        Ok(c) => c,
                        Err(e) => return fail(e),
                    };
                    (grade_config.rubric, grade_config.models)
                }
                (None, Some(list)) => {
                    let entries: Vec<ModelConfig> = list
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|id| ModelConfig {
                            rater_id: id.to_string(),
                            label: id.to_string(),
                            model_name: id.to_string(),
                            provider: ChatProviderKind::Stub,
                            temperature: 0.0,
                            max_retries: 3,
                            max_parallel: 4,
                            requests_per_second: 1e6,
                        })
                        .collect();
                    (rubric.clone().unwrap_or_default(), entries)
                }
                (None, None) => {
                    return fail(PipelineError {
                        stage: "config".into(),
                        kind: ErrorKind::Config,
                        message: "pass --config or --models".into(),
                    })
                }
            };
            let rubric_path = rubric.unwrap_or(rubric_path);
            if rubric_path.as_os_str().is_empty() {
                return fail(PipelineError {
                    stage: "config".into(),
                    kind: ErrorKind::Config,
                    message: "a rubric file is required (--rubric or config)".into(),
                });
            }
            if stub {
                for model in &mut model_list {
                    model.provider = ChatProviderKind::Stub;
                    model.requests_per_second = 1e6;
                }
            }
            let log_path = log.unwrap_or_else(|| {
                let mut p = out.as_os_str().to_owned();
                p.push(".log.jsonl");
                PathBuf::from(p)
            });
            match run_grade(&corpus, scale, &rubric_path, &model_list, &out, &log_path, resume) {
                Ok(report) => {
                    println!(
                        "graded {} cells ({} skipped as existing, {} requests)",
                        report.graded, report.skipped_existing, report.requests
                    );
                    for failure in &report.failures {
                        eprintln!(
                            "failed cell {}/{}: {:?} after {} attempts: {}",
                            failure.essay_id,
                            failure.rater_id,
                            failure.kind,
                            failure.attempts,
                            failure.detail
                        );
                    }
                    if report.failures.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("{} cells failed", report.failures.len());
                        ExitCode::from(ErrorKind::Provider.exit_code() as u8)
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Prep {
            corpus,
            out,
            stopwords,
            domain_stopwords,
            scale,
        } => {
            let scale = match scale.build() {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let loaded = match load_corpus_dir(&corpus, scale) {
                Ok(c) => c,
                Err(e) => return fail(input_error(e.to_string())),
            };
            let prep = {
                let base = PrepConfig::default_english();
                let stop = match &stopwords {
                    Some(path) => match raterlens::textprep::load_stopword_file(path) {
                        Ok(s) => s,
                        Err(e) => return fail(input_error(e.to_string())),
                    },
                    None => base.stopwords().clone(),
                };
                let domain = match &domain_stopwords {
                    Some(path) => match raterlens::textprep::load_stopword_file(path) {
                        Ok(s) => s,
                        Err(e) => return fail(input_error(e.to_string())),
                    },
                    None => base.domain_stopwords().clone(),
                };
                PrepConfig::new(stop, domain)
            };
            let mut ratings: Vec<_> = loaded
                .ratings()
                .iter()
                .filter(|r| r.rationale.is_some())
                .collect();
            ratings.sort_by(|a, b| {
                (&a.essay_id, &a.rater_id).cmp(&(&b.essay_id, &b.rater_id))
            });
            let mut body = String::new();
            for rating in &ratings {
                let clean =
                    raterlens::textprep::preprocess(rating.rationale.as_deref().unwrap(), &prep);
                let record = serde_json::json!({
                    "essay_id": rating.essay_id,
                    "rater_id": rating.rater_id,
                    "clean": clean.as_str(),
                });
                body.push_str(&record.to_string());
                body.push('\n');
            }
            if let Err(e) = raterlens::ioutil::atomic_write(&out, body.as_bytes()) {
                return fail(input_error(e.to_string()));
            }
            println!("wrote {} cleaned rationales to {}", ratings.len(), out.display());
            ExitCode::SUCCESS
        }
        Command::Embed {
            corpus,
            out,
            provider,
            dim,
            endpoint,
            model,
            raw,
            scale,
        } => {
            let scale = match scale.build() {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let provider = EmbeddingProviderConfig {
                kind: provider,
                dim,
                endpoint,
                model_name: model,
                ..EmbeddingProviderConfig::fallback(dim)
            };
            let mut config = RunConfig::new(corpus, out, provider);
            config.scale = scale;
            config.embed_preprocessed = !raw;
            config.stages = StageToggles {
                agreement: false,
                similarity: false,
                pca: false,
                heatmaps: false,
            };
            // Embedding-only run: reuse the pipeline's embed stage by
            // enabling a stage that needs embeddings but emits nothing.
            match raterlens::pipeline::run_embed_only(&config) {
                Ok(report) => {
                    println!(
                        "embedding cache ready: {} requested, {} cached, {} fetched",
                        report.requested, report.cached, report.fetched
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Analyze {
            config,
            corpus,
            out,
            reference_rater,
            provider,
            dim,
            endpoint,
            stages,
            resume,
            seed,
        } => {
            let mut run_config = match &config {
                Some(path) => match RunConfig::load(path) {
                    Ok(c) => c,
                    Err(e) => return fail(e),
                },
                None => RunConfig::new(
                    PathBuf::new(),
                    PathBuf::new(),
                    EmbeddingProviderConfig::fallback(256),
                ),
            };
            if let Some(corpus) = corpus {
                run_config.corpus_dir = corpus;
            }
            if let Some(out) = out {
                run_config.out_dir = out;
            }
            if let Some(reference) = reference_rater {
                run_config.reference_rater = Some(reference);
            }
            if let Some(kind) = provider {
                run_config.provider.kind = kind;
            }
            if let Some(dim) = dim {
                run_config.provider.dim = dim;
            }
            if let Some(endpoint) = endpoint {
                run_config.provider.endpoint = Some(endpoint);
            }
            if let Some(list) = stages {
                match StageToggles::parse_list(&list) {
                    Ok(toggles) => run_config.stages = toggles,
                    Err(message) => {
                        return fail(PipelineError {
                            stage: "config".into(),
                            kind: ErrorKind::Config,
                            message,
                        })
                    }
                }
            }
            if let Some(seed) = seed {
                run_config.seed = seed;
            }
            if !resume {
                let cache = run_config.out_dir.join("cache/embeddings.jsonl");
                if cache.exists() {
                    if let Err(e) = std::fs::remove_file(&cache) {
                        return fail(input_error(format!(
                            "cannot clear cache {}: {e}",
                            cache.display()
                        )));
                    }
                }
            }
            match run_analyze(&run_config) {
                Ok(summary) => {
                    println!(
                        "analysis complete: {} tables, {} figures in {}",
                        summary.tables,
                        summary.figures,
                        summary.run_dir.display()
                    );
                    for note in &summary.notes {
                        println!("note: {note}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Selftest => {
            let report = selftest::run(&Hooks::default());
            print!("{}", report.render_text());
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
