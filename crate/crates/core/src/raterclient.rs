//! Few-shot grading client: assemble the rubric-plus-samples prompt, call a
//! chat-style completion endpoint per essay per model, and parse scores and
//! rationales into ratings.
//!
//! The response format contract (`Score: <integer>` on the first line, then
//! the rationale) is imposed by the prompt; unstructured replies trigger a
//! retry with a format reminder. Grading a corpus is resumable: cells
//! already present in the ratings file are never requested again.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Essay, Rating, ScoreScale};
use crate::embed::backoff_delay;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("failed to read/write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid rubric: {0}")]
    RubricInvalid(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint response invalid: {0}")]
    BadResponse(String),
    #[error("output file {path} already exists; pass resume to continue it")]
    OutputExists { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Descriptors {
    #[serde(default)]
    pub task_completion: String,
    #[serde(default)]
    pub delivery: String,
    #[serde(default)]
    pub language_use: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricLevel {
    pub score: i32,
    pub label: String,
    pub descriptors: Descriptors,
    pub sample: String,
    /// Where the sample came from (guideline exemplar vs locally scored).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_source: Option<String>,
}

/// Task prompt plus one descriptor block and sample essay per score level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rubric {
    pub task_prompt: String,
    pub levels: Vec<RubricLevel>,
}

impl Rubric {
    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let content = std::fs::read_to_string(path).map_err(|source| ClientError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&content).map_err(|e| ClientError::RubricInvalid(e.to_string()))
    }

    /// Level scores must exactly cover the scale, ascending, and levels for
    /// scores >= 1 must carry non-empty descriptors.
    pub fn validate(&self, scale: &ScoreScale) -> Result<(), ClientError> {
        let expected: Vec<i32> = scale.scores().collect();
        let got: Vec<i32> = self.levels.iter().map(|l| l.score).collect();
        if got != expected {
            return Err(ClientError::RubricInvalid(format!(
                "level scores {got:?} must exactly cover the scale {expected:?}"
            )));
        }
        for level in &self.levels {
            if level.score >= 1 {
                let d = &level.descriptors;
                if d.task_completion.is_empty() || d.delivery.is_empty() || d.language_use.is_empty()
                {
                    return Err(ClientError::RubricInvalid(format!(
                        "score {} is missing a descriptor",
                        level.score
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    #[serde(rename = "model")]
    pub model_name: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ChatUsage {
    #[serde(default)]
    pub prompt_tokens: Option<u64>,
    #[serde(default)]
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    #[serde(default)]
    pub finish_reason: Option<String>,
    #[serde(default)]
    pub usage: Option<ChatUsage>,
}

/// One chat completion per call; implementations decide transport.
pub trait ChatProvider: Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError>;
}

/// JSON-over-HTTP provider with transport retries and backoff.
pub struct HttpChatProvider {
    endpoint: String,
    api_key: Option<String>,
    max_retries: u32,
    client: reqwest::blocking::Client,
}

impl HttpChatProvider {
    pub fn new(
        endpoint: &str,
        api_key_env: Option<&str>,
        max_retries: u32,
    ) -> Result<Self, ClientError> {
        let api_key = match api_key_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| ClientError::MissingCredential(var.into()))?)
            }
            None => None,
        };
        Ok(Self {
            endpoint: endpoint.to_string(),
            api_key,
            max_retries,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .map_err(|e| ClientError::Config(e.to_string()))?,
        })
    }

    fn attempt(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let mut req = self.client.post(&self.endpoint).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response = req
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(ClientError::Transport(format!(
                "status {}",
                response.status()
            )));
        }
        response
            .json()
            .map_err(|e| ClientError::BadResponse(e.to_string()))
    }
}

impl ChatProvider for HttpChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            match self.attempt(request) {
                Ok(response) => return Ok(response),
                Err(ClientError::Transport(message)) => {
                    last = message;
                    if attempt < self.max_retries {
                        std::thread::sleep(backoff_delay(attempt));
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(ClientError::Transport(format!(
            "gave up after {} attempts: {last}",
            self.max_retries + 1
        )))
    }
}

/// Offline provider producing deterministic, well-formed grades; the score
/// is a hash of the essay text folded into the scale.
pub struct StubChatProvider {
    pub scale: ScoreScale,
}

impl ChatProvider for StubChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let essay = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        let mut hash: u64 = 0xcbf29ce484222325;
        for b in essay.bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        let score = self.scale.min_score + (hash % self.scale.k() as u64) as i32;
        Ok(ChatResponse {
            content: format!(
                "Score: {score}\nThe response sits at level {score} of the rubric: task coverage, \
                 coherence of delivery, and control of language use are all consistent with the \
                 level-{score} descriptors and sample."
            ),
            finish_reason: Some("stop".into()),
            usage: None,
        })
    }
}

const ESSAY_FENCE_BASE: usize = 4;

fn essay_fences(text: &str) -> (String, String) {
    let mut dashes = ESSAY_FENCE_BASE;
    loop {
        let open = format!("{}BEGIN ESSAY{}", "-".repeat(dashes), "-".repeat(dashes));
        let close = format!("{}END ESSAY{}", "-".repeat(dashes), "-".repeat(dashes));
        if !text.contains(&open) && !text.contains(&close) {
            return (open, close);
        }
        dashes += 1;
    }
}

/// Build the grading conversation: a system message carrying instructions,
/// the writing task, every score level with its descriptors and sample
/// essay (ascending), and the output-format contract; then a user message
/// with the essay fenced so section markers inside it stay unambiguous.
pub fn assemble_prompt(rubric: &Rubric, essay: &Essay) -> Vec<ChatMessage> {
    let min = rubric.levels.first().map(|l| l.score).unwrap_or(0);
    let max = rubric.levels.last().map(|l| l.score).unwrap_or(6);
    let mut system = String::new();
    system.push_str(
        "You are a certified rater for a standardized writing assessment. Grade the student \
         response against the scoring guidelines below, considering task completion, delivery, \
         and language use.\n\n## Writing task\n",
    );
    system.push_str(&rubric.task_prompt);
    system.push_str("\n\n## Scoring guidelines\n");
    for level in &rubric.levels {
        system.push_str(&format!("\n### Score {}: {}\n", level.score, level.label));
        let d = &level.descriptors;
        for (name, text) in [
            ("Task Completion", &d.task_completion),
            ("Delivery", &d.delivery),
            ("Language Use", &d.language_use),
        ] {
            if !text.is_empty() {
                system.push_str(&format!("{name}: {text}\n"));
            }
        }
        system.push_str(&format!("Sample response:\n{}\n", level.sample));
    }
    system.push_str(&format!(
        "\n## Output format\nReply with the score on the first line, exactly as \
         `Score: <integer {min}-{max}>`, then give the rationale for the score starting on the \
         next line."
    ));

    let (open, close) = essay_fences(&essay.text);
    let user = format!(
        "Grade the following student response.\n{open}\n{}\n{close}",
        essay.text
    );
    vec![ChatMessage::system(system), ChatMessage::user(user)]
}

/// Why a response could not be turned into a grade.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseIssue {
    /// First non-blank line is not `Score: <integer>`.
    MalformedScoreLine,
    /// Score parsed but falls outside the scale.
    OutOfRange(i32),
    /// Nothing after the score line.
    EmptyRationale,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedGrade {
    pub score: i32,
    pub rationale: String,
    pub raw: String,
}

/// Parse `Score: <integer>` from the first non-blank line; the rationale is
/// the remainder, trimmed.
pub fn parse_grade(raw: &str, scale: &ScoreScale) -> Result<ParsedGrade, ParseIssue> {
    let mut offset = 0;
    let mut score_line = None;
    for line in raw.split_inclusive('\n') {
        if line.trim().is_empty() {
            offset += line.len();
            continue;
        }
        score_line = Some(line.trim_end_matches(['\r', '\n']).trim().to_string());
        offset += line.len();
        break;
    }
    let score_line = score_line.ok_or(ParseIssue::MalformedScoreLine)?;
    let score = score_line
        .strip_prefix("Score:")
        .map(str::trim)
        .and_then(|s| s.parse::<i32>().ok())
        .ok_or(ParseIssue::MalformedScoreLine)?;
    if !scale.contains(score) {
        return Err(ParseIssue::OutOfRange(score));
    }
    let rationale = raw[offset..].trim().to_string();
    if rationale.is_empty() {
        return Err(ParseIssue::EmptyRationale);
    }
    Ok(ParsedGrade {
        score,
        rationale,
        raw: raw.to_string(),
    })
}

/// Simple token-bucket limiter shared across a model's workers.
pub struct RateLimiter {
    min_interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64) -> Self {
        let min_interval = if requests_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / requests_per_second)
        } else {
            Duration::ZERO
        };
        Self {
            min_interval,
            next_slot: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let wait_until = {
            let mut slot = self.next_slot.lock().expect("limiter lock");
            let now = Instant::now();
            let at = (*slot).max(now);
            *slot = at + self.min_interval;
            at
        };
        let now = Instant::now();
        if wait_until > now {
            std::thread::sleep(wait_until - now);
        }
    }
}

fn default_temperature() -> f64 {
    0.0
}

fn default_max_retries() -> u32 {
    3
}

fn default_max_parallel() -> usize {
    4
}

fn default_rps() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ChatProviderKind {
    Http {
        endpoint: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
    },
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Rater id recorded on emitted ratings.
    pub rater_id: String,
    #[serde(default)]
    pub label: String,
    /// Model name sent on the wire.
    pub model_name: String,
    pub provider: ChatProviderKind,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_rps")]
    pub requests_per_second: f64,
}

impl ModelConfig {
    pub fn build_provider(&self, scale: &ScoreScale) -> Result<Box<dyn ChatProvider>, ClientError> {
        match &self.provider {
            ChatProviderKind::Http {
                endpoint,
                api_key_env,
            } => Ok(Box::new(HttpChatProvider::new(
                endpoint,
                api_key_env.as_deref(),
                self.max_retries,
            )?)),
            ChatProviderKind::Stub => Ok(Box::new(StubChatProvider { scale: *scale })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Transport,
    UnparsableResponse,
    OutOfRangeScore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellFailure {
    pub essay_id: String,
    pub rater_id: String,
    pub kind: FailureKind,
    pub attempts: u32,
    pub detail: String,
}

/// One provider attempt, logged regardless of outcome so raw responses are
/// always auditable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttemptRecord {
    pub essay_id: String,
    pub rater_id: String,
    pub attempt: u32,
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct GradeReport {
    /// Newly graded cells.
    pub graded: usize,
    /// Cells skipped because a rating already existed.
    pub skipped_existing: usize,
    /// Provider round trips actually performed.
    pub requests: usize,
    pub failures: Vec<CellFailure>,
}

fn classify(issue: &ParseIssue) -> FailureKind {
    match issue {
        ParseIssue::OutOfRange(_) => FailureKind::OutOfRangeScore,
        _ => FailureKind::UnparsableResponse,
    }
}

const FORMAT_REMINDER: &str = "Format reminder: reply with the score on the first line, exactly \
                               as `Score: <integer>`, then give the rationale starting on the \
                               next line.";

/// Grade one essay, retrying parse failures with a format reminder.
///
/// Returns the attempt log alongside the outcome; every raw response is in
/// the log even when grading fails.
pub fn grade_essay(
    provider: &dyn ChatProvider,
    model: &ModelConfig,
    rubric: &Rubric,
    essay: &Essay,
    scale: &ScoreScale,
    limiter: &RateLimiter,
) -> (Result<ParsedGrade, CellFailure>, Vec<AttemptRecord>) {
    let mut messages = assemble_prompt(rubric, essay);
    let mut log = Vec::new();
    let mut outcome = None;
    for attempt in 0..=model.max_retries {
        limiter.acquire();
        let request = ChatRequest {
            model_name: model.model_name.clone(),
            messages: messages.clone(),
            temperature: model.temperature,
        };
        match provider.complete(&request) {
            Err(err) => {
                log.push(AttemptRecord {
                    essay_id: essay.essay_id.clone(),
                    rater_id: model.rater_id.clone(),
                    attempt,
                    outcome: format!("transport: {err}"),
                    raw: None,
                });
                outcome = Some(Err(CellFailure {
                    essay_id: essay.essay_id.clone(),
                    rater_id: model.rater_id.clone(),
                    kind: FailureKind::Transport,
                    attempts: attempt + 1,
                    detail: err.to_string(),
                }));
            }
            Ok(response) => match parse_grade(&response.content, scale) {
                Ok(grade) => {
                    log.push(AttemptRecord {
                        essay_id: essay.essay_id.clone(),
                        rater_id: model.rater_id.clone(),
                        attempt,
                        outcome: "ok".into(),
                        raw: Some(response.content.clone()),
                    });
                    return (Ok(grade), log);
                }
                Err(issue) => {
                    log.push(AttemptRecord {
                        essay_id: essay.essay_id.clone(),
                        rater_id: model.rater_id.clone(),
                        attempt,
                        outcome: format!("parse_failure: {issue:?}"),
                        raw: Some(response.content.clone()),
                    });
                    outcome = Some(Err(CellFailure {
                        essay_id: essay.essay_id.clone(),
                        rater_id: model.rater_id.clone(),
                        kind: classify(&issue),
                        attempts: attempt + 1,
                        detail: format!("{issue:?}"),
                    }));
                    messages.push(ChatMessage::assistant(response.content));
                    messages.push(ChatMessage::user(FORMAT_REMINDER));
                }
            },
        }
    }
    (outcome.expect("at least one attempt ran"), log)
}

fn read_existing_cells(path: &Path) -> Result<BTreeSet<(String, String)>, ClientError> {
    let mut done = BTreeSet::new();
    if !path.exists() {
        return Ok(done);
    }
    let content = std::fs::read_to_string(path).map_err(|source| ClientError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    for line in content.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let rating: Rating = serde_json::from_str(line)
            .map_err(|e| ClientError::BadResponse(format!("existing ratings file: {e}")))?;
        done.insert((rating.essay_id, rating.rater_id));
    }
    Ok(done)
}

/// Grade every (essay, model) cell, appending ratings in corpus format.
///
/// Failures are recorded per cell and do not stop the run. With `resume`,
/// cells already present in the ratings file are skipped entirely; without
/// it an existing file is an error, so a rating can never be duplicated.
pub fn grade_corpus(
    corpus: &Corpus,
    rubric: &Rubric,
    models: &[ModelConfig],
    ratings_path: &Path,
    log_path: &Path,
    resume: bool,
) -> Result<GradeReport, ClientError> {
    // Build every provider before any request starts, so a missing
    // credential fails fast without touching any endpoint.
    let providers: Vec<Box<dyn ChatProvider>> = models
        .iter()
        .map(|m| m.build_provider(corpus.scale()))
        .collect::<Result<_, _>>()?;
    let pairs: Vec<(&ModelConfig, &dyn ChatProvider)> = models
        .iter()
        .zip(&providers)
        .map(|(m, p)| (m, p.as_ref()))
        .collect();
    grade_corpus_with(corpus, rubric, &pairs, ratings_path, log_path, resume)
}

/// [`grade_corpus`] with injected providers, one per model config.
pub fn grade_corpus_with(
    corpus: &Corpus,
    rubric: &Rubric,
    models: &[(&ModelConfig, &dyn ChatProvider)],
    ratings_path: &Path,
    log_path: &Path,
    resume: bool,
) -> Result<GradeReport, ClientError> {
    rubric.validate(corpus.scale())?;
    for (model, _) in models {
        if model.max_parallel == 0 {
            return Err(ClientError::Config(format!(
                "model {}: max_parallel must be positive",
                model.rater_id
            )));
        }
    }
    if ratings_path.exists() && !resume {
        return Err(ClientError::OutputExists {
            path: ratings_path.to_path_buf(),
        });
    }
    let done = read_existing_cells(ratings_path)?;

    let mut essays: Vec<&Essay> = corpus.essays().iter().collect();
    essays.sort_by(|a, b| a.essay_id.cmp(&b.essay_id));

    let mut report = GradeReport::default();
    let mut log_lines = String::new();
    for (model, provider) in models.iter().copied() {
        let pending: Vec<&Essay> = essays
            .iter()
            .copied()
            .filter(|e| !done.contains(&(e.essay_id.clone(), model.rater_id.clone())))
            .collect();
        report.skipped_existing += essays.len() - pending.len();
        if pending.is_empty() {
            continue;
        }
        let limiter = RateLimiter::new(model.requests_per_second);
        let next = Mutex::new(0usize);
        type CellOutcome = (String, Result<ParsedGrade, CellFailure>, Vec<AttemptRecord>);
        let results: Mutex<Vec<CellOutcome>> = Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..model.max_parallel.min(pending.len()) {
                scope.spawn(|| loop {
                    let idx = {
                        let mut guard = next.lock().expect("queue lock");
                        if *guard >= pending.len() {
                            return;
                        }
                        let idx = *guard;
                        *guard += 1;
                        idx
                    };
                    let essay = pending[idx];
                    let (outcome, attempts) =
                        grade_essay(provider, model, rubric, essay, corpus.scale(), &limiter);
                    results
                        .lock()
                        .expect("results lock")
                        .push((essay.essay_id.clone(), outcome, attempts));
                });
            }
        });
        let mut results = results.into_inner().expect("results lock");
        results.sort_by(|a, b| a.0.cmp(&b.0));

        let mut new_ratings = String::new();
        for (essay_id, outcome, attempts) in results {
            report.requests += attempts.len();
            for record in &attempts {
                log_lines.push_str(&serde_json::to_string(record).expect("record serializes"));
                log_lines.push('\n');
            }
            match outcome {
                Ok(grade) => {
                    let rating = Rating {
                        essay_id,
                        rater_id: model.rater_id.clone(),
                        score: grade.score,
                        rationale: Some(grade.rationale),
                    };
                    new_ratings.push_str(&serde_json::to_string(&rating).expect("serializes"));
                    new_ratings.push('\n');
                    report.graded += 1;
                }
                Err(failure) => report.failures.push(failure),
            }
        }
        append_to(ratings_path, &new_ratings)?;
    }
    append_to(log_path, &log_lines)?;
    Ok(report)
}

fn append_to(path: &Path, content: &str) -> Result<(), ClientError> {
    if content.is_empty() {
        return Ok(());
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| ClientError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| ClientError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    file.write_all(content.as_bytes())
        .map_err(|source| ClientError::Io {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn essay(id: &str, text: &str) -> Essay {
        Essay {
            essay_id: id.into(),
            prompt_id: "ER2".into(),
            text: text.into(),
        }
    }

    fn rubric() -> Rubric {
        let levels = (0..=6)
            .map(|score| RubricLevel {
                score,
                label: format!("Level {score}"),
                descriptors: Descriptors {
                    task_completion: format!("tc {score}"),
                    delivery: format!("d {score}"),
                    language_use: format!("lu {score}"),
                },
                sample: format!("sample {score}"),
                sample_source: None,
            })
            .collect();
        Rubric {
            task_prompt: "Write a reply about climate.".into(),
            levels,
        }
    }

    #[test]
    fn rubric_validation() {
        let scale = ScoreScale::default();
        rubric().validate(&scale).unwrap();

        let mut missing = rubric();
        missing.levels.remove(3);
        assert!(missing.validate(&scale).is_err());

        let mut blank = rubric();
        blank.levels[2].descriptors.delivery.clear();
        assert!(blank.validate(&scale).is_err());
    }

    #[test]
    fn prompt_contains_all_levels_ascending() {
        let messages = assemble_prompt(&rubric(), &essay("E1", "my essay"));
        assert_eq!(messages.len(), 2);
        assert_eq!(messages[0].role, "system");
        assert_eq!(messages[1].role, "user");
        let system = &messages[0].content;
        let mut last = 0;
        for score in 0..=6 {
            let marker = format!("### Score {score}:");
            let pos = system.find(&marker).expect("level block present");
            assert!(pos > last, "levels out of order at {score}");
            last = pos;
        }
        assert!(system.contains("Score: <integer 0-6>"));
        assert!(messages[1].content.contains("my essay"));
    }

    #[test]
    fn prompt_is_deterministic() {
        let a = assemble_prompt(&rubric(), &essay("E1", "text"));
        let b = assemble_prompt(&rubric(), &essay("E1", "text"));
        assert_eq!(a, b);
    }

    #[test]
    fn prompt_fences_grow_past_adversarial_content() {
        let tricky = "look: ----BEGIN ESSAY---- and ----END ESSAY---- inside";
        let messages = assemble_prompt(&rubric(), &essay("E1", tricky));
        let user = &messages[1].content;
        assert!(user.contains("-----BEGIN ESSAY-----"));
        // the fence line chosen is not a substring of the essay itself
        let (open, close) = essay_fences(tricky);
        assert!(!tricky.contains(&open));
        assert!(!tricky.contains(&close));
    }

    #[test]
    fn parse_grade_happy_path() {
        let scale = ScoreScale::default();
        let grade = parse_grade("Score: 4\nThe essay addresses all aspects...", &scale).unwrap();
        assert_eq!(grade.score, 4);
        assert_eq!(grade.rationale, "The essay addresses all aspects...");
    }

    #[test]
    fn parse_grade_failures_classified() {
        let scale = ScoreScale::default();
        assert_eq!(
            parse_grade("I think this is a 4", &scale),
            Err(ParseIssue::MalformedScoreLine)
        );
        assert_eq!(
            parse_grade("Score: 9\nway too good", &scale),
            Err(ParseIssue::OutOfRange(9))
        );
        assert_eq!(parse_grade("Score: 4", &scale), Err(ParseIssue::EmptyRationale));
        assert_eq!(parse_grade("", &scale), Err(ParseIssue::MalformedScoreLine));
    }

    #[test]
    fn parse_grade_tolerates_leading_blank_lines_and_crlf() {
        let scale = ScoreScale::default();
        let grade = parse_grade("\n\nScore: 2\r\nweak but present", &scale).unwrap();
        assert_eq!(grade.score, 2);
        assert_eq!(grade.rationale, "weak but present");
    }

    /// Scripted provider: pops canned responses, counts calls.
    struct Scripted {
        responses: Mutex<Vec<Result<String, ()>>>,
        calls: Mutex<u32>,
    }

    impl Scripted {
        fn new(responses: Vec<Result<&str, ()>>) -> Self {
            Self {
                responses: Mutex::new(
                    responses
                        .into_iter()
                        .rev()
                        .map(|r| r.map(str::to_string))
                        .collect(),
                ),
                calls: Mutex::new(0),
            }
        }
    }

    impl ChatProvider for Scripted {
        fn complete(&self, _request: &ChatRequest) -> Result<ChatResponse, ClientError> {
            *self.calls.lock().unwrap() += 1;
            match self.responses.lock().unwrap().pop() {
                Some(Ok(content)) => Ok(ChatResponse {
                    content,
                    finish_reason: None,
                    usage: None,
                }),
                Some(Err(())) => Err(ClientError::Transport("scripted outage".into())),
                None => Err(ClientError::Transport("script exhausted".into())),
            }
        }
    }

    fn model(rater_id: &str) -> ModelConfig {
        ModelConfig {
            rater_id: rater_id.into(),
            label: rater_id.into(),
            model_name: "test-model".into(),
            provider: ChatProviderKind::Stub,
            temperature: 0.0,
            max_retries: 3,
            max_parallel: 2,
            requests_per_second: 1e6,
        }
    }

    #[test]
    fn grade_essay_retries_format_violation_then_succeeds() {
        let provider = Scripted::new(vec![
            Ok("I think this is a 4"),
            Ok("Score: 4\nAddresses all aspects."),
        ]);
        let limiter = RateLimiter::new(1e6);
        let (outcome, log) = grade_essay(
            &provider,
            &model("A1"),
            &rubric(),
            &essay("E1", "text"),
            &ScoreScale::default(),
            &limiter,
        );
        let grade = outcome.unwrap();
        assert_eq!(grade.score, 4);
        assert_eq!(log.len(), 2);
        assert!(log[0].outcome.starts_with("parse_failure"));
        assert_eq!(log[1].outcome, "ok");
        assert_eq!(*provider.calls.lock().unwrap(), 2);
    }

    #[test]
    fn grade_essay_out_of_range_exhausts_retries() {
        let provider = Scripted::new(vec![
            Ok("Score: 9\nnope"),
            Ok("Score: 9\nnope"),
            Ok("Score: 9\nnope"),
            Ok("Score: 9\nnope"),
        ]);
        let limiter = RateLimiter::new(1e6);
        let (outcome, log) = grade_essay(
            &provider,
            &model("A1"),
            &rubric(),
            &essay("E1", "text"),
            &ScoreScale::default(),
            &limiter,
        );
        let failure = outcome.unwrap_err();
        assert_eq!(failure.kind, FailureKind::OutOfRangeScore);
        assert_eq!(failure.attempts, 4);
        assert_eq!(log.len(), 4);
        assert!(log.iter().all(|r| r.raw.is_some()));
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let limiter = RateLimiter::new(100.0); // 10ms interval
        let start = Instant::now();
        for _ in 0..4 {
            limiter.acquire();
        }
        // first slot is immediate, three more at 10ms spacing
        assert!(start.elapsed() >= Duration::from_millis(30));
    }

    proptest::proptest! {
        // Parser totality: any response text yields either a grade or a
        // classified issue, never a panic or a silent drop.
        #[test]
        fn parse_grade_is_total(raw in ".{0,200}") {
            let scale = ScoreScale::default();
            match parse_grade(&raw, &scale) {
                Ok(grade) => {
                    proptest::prop_assert!(scale.contains(grade.score));
                    proptest::prop_assert!(!grade.rationale.is_empty());
                }
                Err(
                    ParseIssue::MalformedScoreLine
                    | ParseIssue::OutOfRange(_)
                    | ParseIssue::EmptyRationale,
                ) => {}
            }
        }
    }
}
