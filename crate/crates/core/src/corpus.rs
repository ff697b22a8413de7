//! Data model, ingestion, validation, and persistence for essays, raters,
//! and ratings.
//!
//! Corpora live on disk as three UTF-8 line-delimited record files (one
//! JSON object per line): `essays.jsonl`, `raters.jsonl`, `ratings.jsonl`.
//! A [`Corpus`] is immutable after load and safe to share across threads.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ioutil::atomic_write;

pub const ESSAYS_FILE: &str = "essays.jsonl";
pub const RATERS_FILE: &str = "raters.jsonl";
pub const RATINGS_FILE: &str = "ratings.jsonl";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid scale: min {min} must be less than max {max}")]
    InvalidScale { min: i32, max: i32 },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate essay_id {essay_id:?}")]
    DuplicateEssay { essay_id: String },
    #[error("duplicate rater_id {rater_id:?}")]
    DuplicateRater { rater_id: String },
    #[error("duplicate rating for essay {essay_id:?} by rater {rater_id:?}")]
    DuplicateRating { essay_id: String, rater_id: String },
    #[error("rating references unknown essay {essay_id:?}")]
    DanglingEssay { essay_id: String },
    #[error("rating references unknown rater {rater_id:?}")]
    DanglingRater { rater_id: String },
    #[error("rating for essay {essay_id:?} by rater {rater_id:?} has score {score} outside scale [{min}, {max}]")]
    ScoreOutOfRange {
        essay_id: String,
        rater_id: String,
        score: i32,
        min: i32,
        max: i32,
    },
    #[error("essay {essay_id:?} has empty text")]
    EmptyEssayText { essay_id: String },
    #[error("unknown rater {rater_id:?}")]
    UnknownRater { rater_id: String },
    #[error("rater {rater_id:?} has no ratings; mean is undefined")]
    NoRatings { rater_id: String },
}

/// Inclusive integer rubric scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreScale {
    pub min_score: i32,
    pub max_score: i32,
}

impl ScoreScale {
    pub fn new(min_score: i32, max_score: i32) -> Result<Self, CorpusError> {
        if min_score >= max_score {
            return Err(CorpusError::InvalidScale {
                min: min_score,
                max: max_score,
            });
        }
        Ok(Self {
            min_score,
            max_score,
        })
    }

    /// Number of score categories on the scale.
    pub fn k(&self) -> usize {
        (self.max_score - self.min_score + 1) as usize
    }

    pub fn contains(&self, score: i32) -> bool {
        score >= self.min_score && score <= self.max_score
    }

    pub fn clamp(&self, score: i32) -> i32 {
        score.clamp(self.min_score, self.max_score)
    }

    /// Ascending iterator over all scores on the scale.
    pub fn scores(&self) -> impl Iterator<Item = i32> {
        self.min_score..=self.max_score
    }
}

impl Default for ScoreScale {
    fn default() -> Self {
        Self {
            min_score: 0,
            max_score: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Essay {
    pub essay_id: String,
    pub prompt_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RaterKind {
    Human,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterProfile {
    pub rater_id: String,
    pub kind: RaterKind,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub essay_id: String,
    pub rater_id: String,
    pub score: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

/// Per-rater score summary (sample standard deviation, n-1 divisor).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub mean: f64,
    /// Absent when fewer than 2 ratings exist.
    pub std_dev: Option<f64>,
    pub n: usize,
}

/// A validated collection of essays, raters, and ratings on one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    scale: ScoreScale,
    essays: Vec<Essay>,
    raters: Vec<RaterProfile>,
    ratings: Vec<Rating>,
    essay_index: HashMap<String, usize>,
    rater_index: HashMap<String, usize>,
    rating_index: HashMap<(String, String), usize>,
}

impl Corpus {
    /// Assemble and validate a corpus from in-memory records.
    pub fn new(
        scale: ScoreScale,
        essays: Vec<Essay>,
        raters: Vec<RaterProfile>,
        ratings: Vec<Rating>,
    ) -> Result<Self, CorpusError> {
        let mut essay_index = HashMap::new();
        for (i, e) in essays.iter().enumerate() {
            if e.text.is_empty() {
                return Err(CorpusError::EmptyEssayText {
                    essay_id: e.essay_id.clone(),
                });
            }
            if essay_index.insert(e.essay_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateEssay {
                    essay_id: e.essay_id.clone(),
                });
            }
        }
        let mut rater_index = HashMap::new();
        for (i, r) in raters.iter().enumerate() {
            if rater_index.insert(r.rater_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateRater {
                    rater_id: r.rater_id.clone(),
                });
            }
        }
        let mut rating_index = HashMap::new();
        for (i, r) in ratings.iter().enumerate() {
            if !essay_index.contains_key(&r.essay_id) {
                return Err(CorpusError::DanglingEssay {
                    essay_id: r.essay_id.clone(),
                });
            }
            if !rater_index.contains_key(&r.rater_id) {
                return Err(CorpusError::DanglingRater {
                    rater_id: r.rater_id.clone(),
                });
            }
            if !scale.contains(r.score) {
                return Err(CorpusError::ScoreOutOfRange {
                    essay_id: r.essay_id.clone(),
                    rater_id: r.rater_id.clone(),
                    score: r.score,
                    min: scale.min_score,
                    max: scale.max_score,
                });
            }
            let key = (r.essay_id.clone(), r.rater_id.clone());
            if rating_index.insert(key, i).is_some() {
                return Err(CorpusError::DuplicateRating {
                    essay_id: r.essay_id.clone(),
                    rater_id: r.rater_id.clone(),
                });
            }
        }
        Ok(Self {
            scale,
            essays,
            raters,
            ratings,
            essay_index,
            rater_index,
            rating_index,
        })
    }

    pub fn scale(&self) -> &ScoreScale {
        &self.scale
    }

    pub fn essays(&self) -> &[Essay] {
        &self.essays
    }

    pub fn raters(&self) -> &[RaterProfile] {
        &self.raters
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn essay(&self, essay_id: &str) -> Option<&Essay> {
        self.essay_index.get(essay_id).map(|&i| &self.essays[i])
    }

    pub fn rater(&self, rater_id: &str) -> Option<&RaterProfile> {
        self.rater_index.get(rater_id).map(|&i| &self.raters[i])
    }

    pub fn rating(&self, essay_id: &str, rater_id: &str) -> Option<&Rating> {
        self.rating_index
            .get(&(essay_id.to_string(), rater_id.to_string()))
            .map(|&i| &self.ratings[i])
    }

    pub fn ratings_by<'a>(&'a self, rater_id: &'a str) -> impl Iterator<Item = &'a Rating> + 'a {
        self.ratings.iter().filter(move |r| r.rater_id == rater_id)
    }

    /// Rater ids of one kind, sorted ascending.
    pub fn rater_ids_of_kind(&self, kind: RaterKind) -> Vec<String> {
        let mut ids: Vec<String> = self
            .raters
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.rater_id.clone())
            .collect();
        ids.sort();
        ids
    }

    /// Score pairs for essays rated by both raters, ordered by essay_id.
    ///
    /// Essays missing a rating from either rater are silently excluded; the
    /// caller reports the effective n.
    pub fn paired_scores(
        &self,
        rater_a: &str,
        rater_b: &str,
    ) -> Result<Vec<(i32, i32)>, CorpusError> {
        for id in [rater_a, rater_b] {
            if self.rater(id).is_none() {
                return Err(CorpusError::UnknownRater {
                    rater_id: id.to_string(),
                });
            }
        }
        let mut essay_ids: Vec<&str> = self.essays.iter().map(|e| e.essay_id.as_str()).collect();
        essay_ids.sort_unstable();
        let mut pairs = Vec::new();
        for essay_id in essay_ids {
            if let (Some(a), Some(b)) = (self.rating(essay_id, rater_a), self.rating(essay_id, rater_b))
            {
                pairs.push((a.score, b.score));
            }
        }
        Ok(pairs)
    }

    /// Mean and sample standard deviation (n-1 divisor) of a rater's scores.
    pub fn score_summary(&self, rater_id: &str) -> Result<ScoreSummary, CorpusError> {
        if self.rater(rater_id).is_none() {
            return Err(CorpusError::UnknownRater {
                rater_id: rater_id.to_string(),
            });
        }
        let scores: Vec<f64> = self.ratings_by(rater_id).map(|r| r.score as f64).collect();
        if scores.is_empty() {
            return Err(CorpusError::NoRatings {
                rater_id: rater_id.to_string(),
            });
        }
        let n = scores.len();
        let mean = scores.iter().sum::<f64>() / n as f64;
        let std_dev = if n >= 2 {
            let ss: f64 = scores.iter().map(|s| (s - mean) * (s - mean)).sum();
            Some((ss / (n - 1) as f64).sqrt())
        } else {
            None
        };
        Ok(ScoreSummary { mean, std_dev, n })
    }

    /// Write the corpus to `dir` as the three standard record files.
    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        let io_err = |path: &Path, source: std::io::Error| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut essays = String::new();
        for e in &self.essays {
            essays.push_str(&serde_json::to_string(e).expect("essay serializes"));
            essays.push('\n');
        }
        let mut raters = String::new();
        for r in &self.raters {
            raters.push_str(&serde_json::to_string(r).expect("rater serializes"));
            raters.push('\n');
        }
        let mut ratings = String::new();
        for r in &self.ratings {
            ratings.push_str(&serde_json::to_string(r).expect("rating serializes"));
            ratings.push('\n');
        }
        let essays_path = dir.join(ESSAYS_FILE);
        let raters_path = dir.join(RATERS_FILE);
        let ratings_path = dir.join(RATINGS_FILE);
        atomic_write(&essays_path, essays.as_bytes()).map_err(|e| io_err(&essays_path, e))?;
        atomic_write(&raters_path, raters.as_bytes()).map_err(|e| io_err(&raters_path, e))?;
        atomic_write(&ratings_path, ratings.as_bytes()).map_err(|e| io_err(&ratings_path, e))?;
        Ok(())
    }
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Load and validate a corpus from the three record files.
pub fn load_corpus(
    essays_path: &Path,
    raters_path: &Path,
    ratings_path: &Path,
    scale: ScoreScale,
) -> Result<Corpus, CorpusError> {
    let essays: Vec<Essay> = parse_jsonl(essays_path)?;
    let raters: Vec<RaterProfile> = parse_jsonl(raters_path)?;
    let ratings: Vec<Rating> = parse_jsonl(ratings_path)?;
    Corpus::new(scale, essays, raters, ratings)
}

/// Load a corpus from a directory using the standard file names.
pub fn load_corpus_dir(dir: &Path, scale: ScoreScale) -> Result<Corpus, CorpusError> {
    load_corpus(
        &dir.join(ESSAYS_FILE),
        &dir.join(RATERS_FILE),
        &dir.join(RATINGS_FILE),
        scale,
    )
}
