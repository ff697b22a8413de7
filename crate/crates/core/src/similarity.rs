//! Cosine similarity between rationale embeddings and the score-difference
//! conditioned summaries derived from it.

use serde::Serialize;
use thiserror::Error;

use crate::corpus::Corpus;
use crate::embed::{EmbedTextMode, EmbeddingStore, EmbeddingVector};

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("vector dimensions differ: {a} vs {b}")]
    DimMismatch { a: usize, b: usize },
    #[error("cosine undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("unknown rater {rater_id:?}")]
    UnknownRater { rater_id: String },
    #[error("embedding missing for rationale of essay {essay_id:?} by rater {rater_id:?}")]
    MissingEmbedding { essay_id: String, rater_id: String },
    #[error("no essays with rationales and scores from both raters")]
    NoOverlap,
}

/// Cosine of the angle between two nonzero vectors, clamped into `[-1, 1]`.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, SimilarityError> {
    if u.dim() != v.dim() {
        return Err(SimilarityError::DimMismatch {
            a: u.dim(),
            b: v.dim(),
        });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.values().iter().zip(v.values()) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(SimilarityError::ZeroNorm);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// One essay's rationale similarity between two raters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityRecord {
    pub essay_id: String,
    pub rater_a: String,
    pub rater_b: String,
    pub cosine: f64,
    pub abs_score_diff: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SkipReason {
    /// Rater supplied no rationale for this essay (the R2 case).
    MissingRationale { rater_id: String },
    /// Rationale preprocessed to an empty string, so nothing was embedded.
    EmptyEmbedText { rater_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedEssay {
    pub essay_id: String,
    pub reason: SkipReason,
}

/// Records plus the skip report for essays that could not be compared.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseSimilarity {
    pub records: Vec<SimilarityRecord>,
    pub skipped: Vec<SkippedEssay>,
}

/// Per-essay rationale cosine between two raters.
///
/// Covers every essay scored by both raters; an essay where either
/// rationale is absent (or empties out under preprocessing) lands in the
/// skip report rather than erroring. A rationale whose embedding is not in
/// the store is an error naming the essay and rater.
pub fn pairwise_rationale_similarity(
    corpus: &Corpus,
    store: &EmbeddingStore,
    rater_a: &str,
    rater_b: &str,
    mode: EmbedTextMode<'_>,
) -> Result<PairwiseSimilarity, SimilarityError> {
    for id in [rater_a, rater_b] {
        if corpus.rater(id).is_none() {
            return Err(SimilarityError::UnknownRater {
                rater_id: id.to_string(),
            });
        }
    }
    let mut essay_ids: Vec<&str> = corpus
        .essays()
        .iter()
        .map(|e| e.essay_id.as_str())
        .collect();
    essay_ids.sort_unstable();

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for essay_id in essay_ids {
        let (Some(ra), Some(rb)) = (
            corpus.rating(essay_id, rater_a),
            corpus.rating(essay_id, rater_b),
        ) else {
            continue;
        };
        let mut lookup = |rating: &crate::corpus::Rating| -> Result<Option<EmbeddingVector>, SimilarityError> {
            let Some(raw) = rating.rationale.as_deref() else {
                skipped.push(SkippedEssay {
                    essay_id: essay_id.to_string(),
                    reason: SkipReason::MissingRationale {
                        rater_id: rating.rater_id.clone(),
                    },
                });
                return Ok(None);
            };
            let text = mode.embedded_text(raw);
            if text.is_empty() {
                skipped.push(SkippedEssay {
                    essay_id: essay_id.to_string(),
                    reason: SkipReason::EmptyEmbedText {
                        rater_id: rating.rater_id.clone(),
                    },
                });
                return Ok(None);
            }
            match store.get_text(&text) {
                Some(v) => Ok(Some(v.clone())),
                None => Err(SimilarityError::MissingEmbedding {
                    essay_id: essay_id.to_string(),
                    rater_id: rating.rater_id.clone(),
                }),
            }
        };
        let va = lookup(ra)?;
        let vb = lookup(rb)?;
        let (Some(va), Some(vb)) = (va, vb) else {
            continue;
        };
        records.push(SimilarityRecord {
            essay_id: essay_id.to_string(),
            rater_a: rater_a.to_string(),
            rater_b: rater_b.to_string(),
            cosine: cosine(&va, &vb)?,
            abs_score_diff: ra.score.abs_diff(rb.score),
        });
    }
    Ok(PairwiseSimilarity { records, skipped })
}

/// Which standard-deviation divisor summaries use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdMode {
    /// n-1 divisor (default).
    Sample,
    /// n divisor.
    Population,
}

/// Summary of similarity records at one absolute score difference.
///
/// `count == 0` marks an empty row (the model is omitted from that table);
/// a single record reports a standard deviation of 0.0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilaritySummary {
    pub abs_score_diff: u32,
    pub count: usize,
    pub max: Option<f64>,
    pub min: Option<f64>,
    pub mean: Option<f64>,
    pub std_dev: Option<f64>,
}

/// Summarize the records whose `abs_score_diff` equals `diff`.
pub fn conditional_summary(
    records: &[SimilarityRecord],
    diff: u32,
    std_mode: StdMode,
) -> SimilaritySummary {
    let values: Vec<f64> = records
        .iter()
        .filter(|r| r.abs_score_diff == diff)
        .map(|r| r.cosine)
        .collect();
    let count = values.len();
    if count == 0 {
        return SimilaritySummary {
            abs_score_diff: diff,
            count: 0,
            max: None,
            min: None,
            mean: None,
            std_dev: None,
        };
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let std_dev = if count == 1 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        let divisor = match std_mode {
            StdMode::Sample => (count - 1) as f64,
            StdMode::Population => count as f64,
        };
        (ss / divisor).sqrt()
    };
    SimilaritySummary {
        abs_score_diff: diff,
        count,
        max: Some(max),
        min: Some(min),
        mean: Some(mean),
        std_dev: Some(std_dev),
    }
}

/// Cross-essay rationale similarity grid for one (LLM, human) rater pair.
///
/// `cells[i][j]` is the cosine between the LLM rationale for essay i and
/// the human rationale for essay j; `labels[i][j]` the absolute difference
/// between the LLM's score on essay i and the human's score on essay j. The
/// diagonal is the matched-essay comparison. `essay_order` is sorted by
/// essay id and covers essays where both raters supplied score and
/// rationale.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapMatrix {
    pub cells: Vec<Vec<f64>>,
    pub labels: Vec<Vec<u32>>,
    pub essay_order: Vec<String>,
}

pub fn similarity_heatmap_matrix(
    corpus: &Corpus,
    store: &EmbeddingStore,
    llm_rater: &str,
    human_rater: &str,
    mode: EmbedTextMode<'_>,
) -> Result<HeatmapMatrix, SimilarityError> {
    for id in [llm_rater, human_rater] {
        if corpus.rater(id).is_none() {
            return Err(SimilarityError::UnknownRater {
                rater_id: id.to_string(),
            });
        }
    }
    let mut rows: Vec<(String, i32, EmbeddingVector)> = Vec::new();
    let mut cols: Vec<(String, i32, EmbeddingVector)> = Vec::new();
    let mut essay_ids: Vec<&str> = corpus
        .essays()
        .iter()
        .map(|e| e.essay_id.as_str())
        .collect();
    essay_ids.sort_unstable();
    for essay_id in essay_ids {
        let (Some(rl), Some(rh)) = (
            corpus.rating(essay_id, llm_rater),
            corpus.rating(essay_id, human_rater),
        ) else {
            continue;
        };
        let (Some(tl), Some(th)) = (rl.rationale.as_deref(), rh.rationale.as_deref()) else {
            continue;
        };
        let tl = mode.embedded_text(tl);
        let th = mode.embedded_text(th);
        if tl.is_empty() || th.is_empty() {
            continue;
        }
        let vl = store
            .get_text(&tl)
            .ok_or_else(|| SimilarityError::MissingEmbedding {
                essay_id: essay_id.to_string(),
                rater_id: llm_rater.to_string(),
            })?
            .clone();
        let vh = store
            .get_text(&th)
            .ok_or_else(|| SimilarityError::MissingEmbedding {
                essay_id: essay_id.to_string(),
                rater_id: human_rater.to_string(),
            })?
            .clone();
        rows.push((essay_id.to_string(), rl.score, vl));
        cols.push((essay_id.to_string(), rh.score, vh));
    }
    if rows.is_empty() {
        return Err(SimilarityError::NoOverlap);
    }
    let n = rows.len();
    let mut cells = vec![vec![0.0; n]; n];
    let mut labels = vec![vec![0u32; n]; n];
    for (i, (_, score_l, vl)) in rows.iter().enumerate() {
        for (j, (_, score_h, vh)) in cols.iter().enumerate() {
            cells[i][j] = cosine(vl, vh)?;
            labels[i][j] = score_l.abs_diff(*score_h);
        }
    }
    Ok(HeatmapMatrix {
        cells,
        labels,
        essay_order: rows.into_iter().map(|(id, _, _)| id).collect(),
    })
}
