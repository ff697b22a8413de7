//! File-level corpus checks with independently counted record files.

use raterlens::corpus::{load_corpus_dir, ScoreScale, RATINGS_FILE};
use raterlens::fixtures::{generate, FixtureSpec};

#[test]
fn loaded_rating_count_matches_independent_line_count() {
    // Build a 30-essay, 9-rater fixture (270 ratings), drop two rating
    // lines, and verify the loader agrees with a plain text-line counter.
    let dir = tempfile::tempdir().unwrap();
    generate(&FixtureSpec::default(), dir.path()).unwrap();
    let ratings_path = dir.path().join(RATINGS_FILE);
    let content = std::fs::read_to_string(&ratings_path).unwrap();
    let kept: Vec<&str> = content.lines().collect();
    assert_eq!(kept.len(), 270);
    // drop two ratings by distinct raters for distinct essays
    let trimmed: Vec<&str> = kept
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != 17 && *i != 203)
        .map(|(_, l)| *l)
        .collect();
    std::fs::write(&ratings_path, trimmed.join("\n") + "\n").unwrap();

    let independent_count = std::fs::read_to_string(&ratings_path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .count();
    assert_eq!(independent_count, 268);

    let corpus = load_corpus_dir(dir.path(), ScoreScale::default()).unwrap();
    assert_eq!(corpus.ratings().len(), 268);
    assert_eq!(corpus.essays().len(), 30);
    assert_eq!(corpus.raters().len(), 9);

    // pairwise analyses silently exclude the missing cells and report the
    // effective n
    let mut shrunk = 0;
    for rater in corpus.raters() {
        for other in corpus.raters() {
            let pairs = corpus
                .paired_scores(&rater.rater_id, &other.rater_id)
                .unwrap();
            if pairs.len() < 30 {
                shrunk += 1;
            }
            assert!(pairs.len() <= 30);
        }
    }
    assert!(shrunk > 0);
}

#[test]
fn corrupted_rating_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    generate(&FixtureSpec::default(), dir.path()).unwrap();
    let ratings_path = dir.path().join(RATINGS_FILE);
    let mut content = std::fs::read_to_string(&ratings_path).unwrap();
    content.push_str("{\"essay_id\": \"E01\", broken\n");
    std::fs::write(&ratings_path, content).unwrap();
    let err = load_corpus_dir(dir.path(), ScoreScale::default()).unwrap_err();
    let message = err.to_string();
    assert!(message.contains(":271:"), "expected line number in: {message}");
}
