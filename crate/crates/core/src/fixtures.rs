//! Deterministic synthetic corpus generator, so the whole analysis pipeline
//! runs hermetically at desk scale.
//!
//! Each essay gets a latent true score; every synthetic rater adds a
//! seeded offset drawn from its noise profile and clips into the scale.
//! Rationales are template sentences over score-band vocabulary pools, so
//! matched scores yield lexically similar rationales under the fallback
//! embedder. Adjacent bands share a few words to keep mid-range similarity
//! values realistic; bands two apart share none.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, CorpusError, Essay, Rating, RaterKind, RaterProfile, ScoreScale};

/// Score-band vocabulary pools, one per score 0..=6.
const POOLS: [[&str; 10]; 7] = [
    [
        "blank", "irrelevant", "restated", "copied", "unrelated", "offtopic", "absent",
        "missing", "untouched", "void",
    ],
    [
        "garbled", "incoherent", "broken", "confusing", "obscured", "missing", "untouched",
        "void", "jumbled", "fractured",
    ],
    [
        "fragmented", "scattered", "sparse", "thin", "jumbled", "fractured", "confusing",
        "patchy", "shaky", "wobbly",
    ],
    [
        "adequate", "plain", "simple", "basic", "patchy", "shaky", "wobbly", "serviceable",
        "uneven", "halting",
    ],
    [
        "solid", "competent", "coherent", "organized", "serviceable", "uneven", "halting",
        "capable", "steady", "developed",
    ],
    [
        "strong", "fluent", "detailed", "connected", "capable", "steady", "developed",
        "precise", "varied", "polished",
    ],
    [
        "excellent", "sophisticated", "nuanced", "compelling", "precise", "varied", "polished",
        "masterful", "rich", "cohesive",
    ],
];

const ESSAY_TOPICS: [&str; 10] = [
    "warmer summers", "shrinking snowfall", "longer droughts", "shifting seasons",
    "coastal flooding", "heavier storms", "earlier springs", "milder winters",
    "hotter evenings", "drier autumns",
];

/// Distribution over score offsets from the latent true score.
pub type NoiseProfile = Vec<(i32, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct RaterSpec {
    pub rater_id: String,
    pub label: String,
    pub kind: RaterKind,
    pub offsets: NoiseProfile,
    pub with_rationales: bool,
}

impl RaterSpec {
    fn new(
        rater_id: &str,
        label: &str,
        kind: RaterKind,
        offsets: NoiseProfile,
        with_rationales: bool,
    ) -> Self {
        Self {
            rater_id: rater_id.to_string(),
            label: label.to_string(),
            kind,
            offsets,
            with_rationales,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub n_essays: usize,
    pub seed: u64,
    pub scale: ScoreScale,
    pub raters: Vec<RaterSpec>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        let llm = |id: &str, label: &str, offsets: NoiseProfile| {
            RaterSpec::new(id, label, RaterKind::Llm, offsets, true)
        };
        Self {
            n_essays: 30,
            seed: 7,
            scale: ScoreScale::default(),
            raters: vec![
                llm("A1", "A1 (exact)", vec![(0, 1.0)]),
                llm("A2", "A2 (tight)", vec![(-1, 0.10), (0, 0.80), (1, 0.10)]),
                llm("A3", "A3 (tight)", vec![(-1, 0.15), (0, 0.70), (1, 0.15)]),
                llm("A4", "A4 (mid)", vec![(-1, 0.25), (0, 0.50), (1, 0.25)]),
                llm(
                    "A5",
                    "A5 (mid)",
                    vec![(-2, 0.10), (-1, 0.20), (0, 0.40), (1, 0.20), (2, 0.10)],
                ),
                llm(
                    "A6",
                    "A6 (wide)",
                    vec![(-2, 0.15), (-1, 0.20), (0, 0.30), (1, 0.20), (2, 0.15)],
                ),
                llm(
                    "A7",
                    "A7 (wide)",
                    vec![(-2, 0.20), (-1, 0.20), (0, 0.20), (1, 0.20), (2, 0.20)],
                ),
                RaterSpec::new("R1", "R1 (human)", RaterKind::Human, vec![(0, 1.0)], true),
                RaterSpec::new(
                    "R2",
                    "R2 (human)",
                    RaterKind::Human,
                    vec![(-1, 0.15), (0, 0.70), (1, 0.15)],
                    false,
                ),
            ],
        }
    }
}

#[derive(Debug)]
pub struct GeneratedFixture {
    /// Latent true score per essay, indexed like the essays.
    pub true_scores: Vec<i32>,
    pub corpus: Corpus,
}

fn band_index(score: i32, scale: &ScoreScale) -> usize {
    let k = POOLS.len() as i32;
    let offset = score - scale.min_score;
    offset.clamp(0, k - 1) as usize
}

fn rationale_for(score: i32, scale: &ScoreScale, rng: &mut ChaCha8Rng) -> String {
    let pool = &POOLS[band_index(score, scale)];
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    indices.shuffle(rng);
    let w: Vec<&str> = indices.iter().take(6).map(|&i| pool[i]).collect();
    format!(
        "The response shows {} {} ideas with {} delivery and {} language use; {} and {} throughout.",
        w[0], w[1], w[2], w[3], w[4], w[5]
    )
}

/// Generate the corpus files into `out_dir` and return the corpus plus the
/// latent true scores. Identical specs produce byte-identical files.
pub fn generate(spec: &FixtureSpec, out_dir: &Path) -> Result<GeneratedFixture, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = spec.scale;

    let mut essays = Vec::with_capacity(spec.n_essays);
    let mut true_scores = Vec::with_capacity(spec.n_essays);
    for i in 1..=spec.n_essays {
        let topic = ESSAY_TOPICS[rng.gen_range(0..ESSAY_TOPICS.len())];
        let second = ESSAY_TOPICS[rng.gen_range(0..ESSAY_TOPICS.len())];
        essays.push(Essay {
            essay_id: format!("E{i:02}"),
            prompt_id: "ER2".to_string(),
            text: format!(
                "Synthetic response {i:02}: the writer describes {topic} and {second}, then \
                 discusses how these changes affect daily life."
            ),
        });
        true_scores.push(rng.gen_range(scale.min_score..=scale.max_score));
    }

    let raters: Vec<RaterProfile> = spec
        .raters
        .iter()
        .map(|r| RaterProfile {
            rater_id: r.rater_id.clone(),
            kind: r.kind,
            label: r.label.clone(),
        })
        .collect();

    let mut ratings = Vec::new();
    for rater in &spec.raters {
        let weights: Vec<f64> = rater.offsets.iter().map(|(_, w)| *w).collect();
        let sampler = WeightedIndex::new(&weights)
            .expect("noise profile weights are positive");
        for (essay, &truth) in essays.iter().zip(&true_scores) {
            let (offset, _) = rater.offsets[sampler.sample(&mut rng)];
            let score = scale.clamp(truth + offset);
            let rationale = rater
                .with_rationales
                .then(|| rationale_for(score, &scale, &mut rng));
            ratings.push(Rating {
                essay_id: essay.essay_id.clone(),
                rater_id: rater.rater_id.clone(),
                score,
                rationale,
            });
        }
    }

    let corpus = Corpus::new(scale, essays, raters, ratings)?;
    corpus.save(out_dir)?;
    Ok(GeneratedFixture {
        true_scores,
        corpus,
    })
}
