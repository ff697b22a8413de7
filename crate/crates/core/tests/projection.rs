//! Matched-score projection behavior on constructed corpora, including the
//! cluster-separation check verified by an independent silhouette
//! computation.

use raterlens::corpus::{Corpus, Essay, Rating, RaterKind, RaterProfile, ScoreScale};
use raterlens::embed::{embed_batch, EmbedTextMode, EmbeddingProviderConfig, EmbeddingStore};
use raterlens::reduce::{matched_score_projection, LabeledPoint, ProjectionOutcome};

fn essay(i: usize) -> Essay {
    Essay {
        essay_id: format!("E{i:02}"),
        prompt_id: "P".into(),
        text: format!("essay {i}"),
    }
}

fn rater(id: &str, kind: RaterKind) -> RaterProfile {
    RaterProfile {
        rater_id: id.into(),
        kind,
        label: id.into(),
    }
}

/// Corpus where two groups of LLM raters write rationales from disjoint
/// vocabularies at the matched score level.
fn clustered_corpus() -> Corpus {
    let forest = [
        "maple birch cedar canopy mossy trails",
        "birch cedar willow canopy shaded groves",
        "maple willow aspen mossy forest paths",
        "cedar aspen canopy mossy woodland cover",
    ];
    let mineral = [
        "quartz basalt granite ridges stony slopes",
        "basalt granite shale ridges gravel beds",
        "quartz shale marble stony cliff faces",
        "granite marble basalt gravel summit rocks",
    ];
    let essays: Vec<Essay> = (0..4).map(essay).collect();
    let raters = vec![
        rater("L1", RaterKind::Llm),
        rater("L2", RaterKind::Llm),
        rater("R1", RaterKind::Human),
    ];
    let mut ratings = Vec::new();
    for i in 0..4 {
        ratings.push(Rating {
            essay_id: format!("E{i:02}"),
            rater_id: "L1".into(),
            score: 4,
            rationale: Some(forest[i].to_string()),
        });
        ratings.push(Rating {
            essay_id: format!("E{i:02}"),
            rater_id: "L2".into(),
            score: 4,
            rationale: Some(mineral[i].to_string()),
        });
        // reference matches the score but contributes no rationale, so the
        // point set is exactly the two LLM clusters
        ratings.push(Rating {
            essay_id: format!("E{i:02}"),
            rater_id: "R1".into(),
            score: 4,
            rationale: None,
        });
    }
    Corpus::new(ScoreScale::default(), essays, raters, ratings).unwrap()
}

fn store_for(corpus: &Corpus) -> EmbeddingStore {
    let mut store = EmbeddingStore::new(256);
    let texts: Vec<String> = corpus
        .ratings()
        .iter()
        .filter_map(|r| r.rationale.clone())
        .collect();
    embed_batch(&texts, &EmbeddingProviderConfig::fallback(256), &mut store).unwrap();
    store
}

/// Independent mean silhouette over two clusters of 2-D points.
fn silhouette(points: &[LabeledPoint]) -> f64 {
    let dist = |a: &LabeledPoint, b: &LabeledPoint| -> f64 {
        ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
    };
    let mut total = 0.0;
    for p in points {
        let same: Vec<f64> = points
            .iter()
            .filter(|q| q.rater_id == p.rater_id && (q.essay_id != p.essay_id))
            .map(|q| dist(p, q))
            .collect();
        let other: Vec<f64> = points
            .iter()
            .filter(|q| q.rater_id != p.rater_id)
            .map(|q| dist(p, q))
            .collect();
        let a = same.iter().sum::<f64>() / same.len() as f64;
        let b = other.iter().sum::<f64>() / other.len() as f64;
        total += (b - a) / a.max(b);
    }
    total / points.len() as f64
}

#[test]
fn well_separated_clusters_have_high_silhouette() {
    let corpus = clustered_corpus();
    let store = store_for(&corpus);
    let outcome =
        matched_score_projection(&corpus, &store, 4, "R1", true, EmbedTextMode::Raw).unwrap();
    let ProjectionOutcome::Points(points) = outcome else {
        panic!("expected points");
    };
    assert_eq!(points.len(), 8);
    let score = silhouette(&points);
    assert!(score > 0.5, "silhouette {score} too low for disjoint vocabularies");
}

#[test]
fn empty_selection_reports_insufficient_data() {
    let corpus = clustered_corpus();
    let store = store_for(&corpus);
    // nobody scored level 0
    let outcome =
        matched_score_projection(&corpus, &store, 0, "R1", true, EmbedTextMode::Raw).unwrap();
    assert_eq!(
        outcome,
        ProjectionOutcome::InsufficientData { available: 0 }
    );
}

#[test]
fn identical_rationales_collapse_to_the_origin() {
    let essays: Vec<Essay> = (0..3).map(essay).collect();
    let raters = vec![rater("L1", RaterKind::Llm), rater("R1", RaterKind::Human)];
    let mut ratings = Vec::new();
    for i in 0..3 {
        ratings.push(Rating {
            essay_id: format!("E{i:02}"),
            rater_id: "L1".into(),
            score: 3,
            rationale: Some("the very same words".into()),
        });
        ratings.push(Rating {
            essay_id: format!("E{i:02}"),
            rater_id: "R1".into(),
            score: 3,
            rationale: Some("the very same words".into()),
        });
    }
    let corpus = Corpus::new(ScoreScale::default(), essays, raters, ratings).unwrap();
    let store = store_for(&corpus);
    let outcome =
        matched_score_projection(&corpus, &store, 3, "R1", true, EmbedTextMode::Raw).unwrap();
    let ProjectionOutcome::Points(points) = outcome else {
        panic!("expected points");
    };
    assert_eq!(points.len(), 6);
    for p in &points {
        assert!(p.x.abs() < 1e-9 && p.y.abs() < 1e-9, "{p:?} not at origin");
    }
}

#[test]
fn score_level_outside_scale_is_an_error() {
    let corpus = clustered_corpus();
    let store = store_for(&corpus);
    assert!(matched_score_projection(&corpus, &store, 9, "R1", true, EmbedTextMode::Raw).is_err());
}
