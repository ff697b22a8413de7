//! Consistency and similarity table construction.

use serde::Serialize;

use super::{fmt_fixed, ReportError, UNDEFINED_CELL};
use crate::agreement::{nmi, qwk_from_pairs, AgreementError};
use crate::corpus::{Corpus, RaterKind};
use crate::similarity::{conditional_summary, SimilarityRecord, StdMode};

/// A rendered table: header plus string cells, ready for CSV/JSON emission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableArtifact {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn csv_escape(cell: &str) -> String {
    if cell.contains(',') || cell.contains('"') || cell.contains('\n') {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

impl TableArtifact {
    /// Comma-separated, header row, UTF-8, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.columns.iter().map(|c| csv_escape(c)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| csv_escape(c)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut body = serde_json::to_string_pretty(self).expect("table serializes");
        body.push('\n');
        body
    }
}

/// One row per rater with Mean, Std. Dev., and NMI/QWK columns against each
/// reference rater. Self-comparisons and undefined metrics render as "--";
/// every undefined cell is also reported as a note for the manifest.
pub fn consistency_table(
    corpus: &Corpus,
    references: &[String],
) -> Result<(TableArtifact, Vec<String>), ReportError> {
    for reference in references {
        if corpus.rater(reference).is_none() {
            return Err(ReportError::UnknownRater {
                rater_id: reference.clone(),
            });
        }
    }
    let mut columns = vec!["Model".to_string(), "Mean".to_string(), "Std. Dev.".to_string()];
    let ref_label = |id: &str| corpus.rater(id).map(|r| r.label.clone()).unwrap_or_default();
    for reference in references {
        columns.push(format!("NMI ({})", ref_label(reference)));
    }
    for reference in references {
        columns.push(format!("QWK ({})", ref_label(reference)));
    }

    let mut rater_ids = corpus.rater_ids_of_kind(RaterKind::Llm);
    rater_ids.extend(corpus.rater_ids_of_kind(RaterKind::Human));

    let mut notes = Vec::new();
    let mut rows = Vec::new();
    for rater_id in &rater_ids {
        let profile = corpus.rater(rater_id).expect("rater listed");
        let mut row = vec![profile.label.clone()];
        match corpus.score_summary(rater_id) {
            Ok(summary) => {
                row.push(fmt_fixed(summary.mean, 2));
                row.push(
                    summary
                        .std_dev
                        .map(|s| fmt_fixed(s, 4))
                        .unwrap_or_else(|| UNDEFINED_CELL.to_string()),
                );
            }
            Err(_) => {
                notes.push(format!("score summary undefined for {rater_id} (no ratings)"));
                row.push(UNDEFINED_CELL.to_string());
                row.push(UNDEFINED_CELL.to_string());
            }
        }
        let mut nmi_cells = Vec::new();
        let mut qwk_cells = Vec::new();
        for reference in references {
            if rater_id == reference {
                nmi_cells.push(UNDEFINED_CELL.to_string());
                qwk_cells.push(UNDEFINED_CELL.to_string());
                continue;
            }
            let pairs = corpus
                .paired_scores(rater_id, reference)
                .expect("raters exist");
            if pairs.is_empty() {
                notes.push(format!("no shared essays between {rater_id} and {reference}"));
                nmi_cells.push(UNDEFINED_CELL.to_string());
                qwk_cells.push(UNDEFINED_CELL.to_string());
                continue;
            }
            nmi_cells.push(fmt_fixed(nmi(&pairs).expect("pairs non-empty"), 4));
            match qwk_from_pairs(&pairs, corpus.scale()) {
                Ok(value) => qwk_cells.push(fmt_fixed(value, 4)),
                Err(AgreementError::UndefinedQwk) => {
                    notes.push(format!("QWK undefined for {rater_id} vs {reference}"));
                    qwk_cells.push(UNDEFINED_CELL.to_string());
                }
                Err(other) => panic!("unexpected agreement failure: {other}"),
            }
        }
        row.extend(nmi_cells);
        row.extend(qwk_cells);
        rows.push(row);
    }
    Ok((
        TableArtifact {
            name: "consistency".to_string(),
            columns,
            rows,
        },
        notes,
    ))
}

/// One table per absolute score difference with Model/Max/Min/Mean/
/// Std. Dev./Count columns; models with no records at that difference are
/// omitted from that table.
pub fn similarity_tables(
    model_records: &[(String, Vec<SimilarityRecord>)],
    diffs: &[u32],
    std_mode: StdMode,
) -> Vec<TableArtifact> {
    let columns: Vec<String> = ["Model", "Max", "Min", "Mean", "Std. Dev.", "Count"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    diffs
        .iter()
        .map(|&diff| {
            let mut rows = Vec::new();
            for (label, records) in model_records {
                let summary = conditional_summary(records, diff, std_mode);
                if summary.count == 0 {
                    continue;
                }
                rows.push(vec![
                    label.clone(),
                    fmt_fixed(summary.max.expect("count > 0"), 4),
                    fmt_fixed(summary.min.expect("count > 0"), 4),
                    fmt_fixed(summary.mean.expect("count > 0"), 4),
                    fmt_fixed(summary.std_dev.expect("count > 0"), 4),
                    summary.count.to_string(),
                ]);
            }
            TableArtifact {
                name: format!("similarity_diff{diff}"),
                columns: columns.clone(),
                rows,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Essay, Rating, RaterProfile, ScoreScale};

    fn corpus() -> Corpus {
        let essays: Vec<Essay> = (0..4)
            .map(|i| Essay {
                essay_id: format!("E{i}"),
                prompt_id: "P".into(),
                text: "t".into(),
            })
            .collect();
        let raters = vec![
            RaterProfile {
                rater_id: "A1".into(),
                kind: RaterKind::Llm,
                label: "Model One".into(),
            },
            RaterProfile {
                rater_id: "R1".into(),
                kind: RaterKind::Human,
                label: "R1".into(),
            },
        ];
        let mut ratings = Vec::new();
        for (i, score) in [1, 2, 3, 4].iter().enumerate() {
            ratings.push(Rating {
                essay_id: format!("E{i}"),
                rater_id: "A1".into(),
                score: *score,
                rationale: None,
            });
            ratings.push(Rating {
                essay_id: format!("E{i}"),
                rater_id: "R1".into(),
                score: *score + 1,
                rationale: None,
            });
        }
        Corpus::new(ScoreScale::default(), essays, raters, ratings).unwrap()
    }

    #[test]
    fn consistency_table_matches_direct_metric_calls() {
        let corpus = corpus();
        let (table, notes) = consistency_table(&corpus, &["R1".to_string()]).unwrap();
        assert_eq!(
            table.columns,
            vec!["Model", "Mean", "Std. Dev.", "NMI (R1)", "QWK (R1)"]
        );
        assert_eq!(table.rows.len(), 2);
        // x=[1,2,3,4] vs y=[2,3,4,5]: QWK = 5/7, NMI = 1 (bijective labeling)
        let row = &table.rows[0];
        assert_eq!(row[0], "Model One");
        assert_eq!(row[1], "2.50");
        let pairs = corpus.paired_scores("A1", "R1").unwrap();
        assert_eq!(row[3], fmt_fixed(nmi(&pairs).unwrap(), 4));
        assert_eq!(
            row[4],
            fmt_fixed(qwk_from_pairs(&pairs, corpus.scale()).unwrap(), 4)
        );
        assert_eq!(row[4], "0.7143");
        // self-comparison cell renders "--"
        let human_row = &table.rows[1];
        assert_eq!(human_row[3], UNDEFINED_CELL);
        assert_eq!(human_row[4], UNDEFINED_CELL);
        assert!(notes.is_empty());
    }

    #[test]
    fn identical_rater_scores_give_unit_metrics() {
        let essays: Vec<Essay> = (0..3)
            .map(|i| Essay {
                essay_id: format!("E{i}"),
                prompt_id: "P".into(),
                text: "t".into(),
            })
            .collect();
        let raters = vec![
            RaterProfile {
                rater_id: "A1".into(),
                kind: RaterKind::Llm,
                label: "A1".into(),
            },
            RaterProfile {
                rater_id: "R1".into(),
                kind: RaterKind::Human,
                label: "R1".into(),
            },
        ];
        let mut ratings = Vec::new();
        for (i, score) in [2, 4, 6].iter().enumerate() {
            for rater in ["A1", "R1"] {
                ratings.push(Rating {
                    essay_id: format!("E{i}"),
                    rater_id: rater.into(),
                    score: *score,
                    rationale: None,
                });
            }
        }
        let corpus = Corpus::new(ScoreScale::default(), essays, raters, ratings).unwrap();
        let (table, _) = consistency_table(&corpus, &["R1".to_string()]).unwrap();
        assert_eq!(table.rows[0][3], "1.0000");
        assert_eq!(table.rows[0][4], "1.0000");
    }

    fn rec(diff: u32, cosine: f64) -> SimilarityRecord {
        SimilarityRecord {
            essay_id: "E".into(),
            rater_a: "A".into(),
            rater_b: "R1".into(),
            cosine,
            abs_score_diff: diff,
        }
    }

    #[test]
    fn similarity_tables_omit_empty_models_and_partition() {
        let models = vec![
            (
                "Model One".to_string(),
                vec![rec(0, 0.5), rec(0, 0.7), rec(1, 0.4)],
            ),
            ("Model Two".to_string(), vec![rec(1, 8.0 / 9.0)]),
        ];
        let tables = similarity_tables(&models, &[0, 1, 2], StdMode::Sample);
        assert_eq!(tables.len(), 3);
        assert_eq!(tables[0].rows.len(), 1); // only Model One has diff-0 rows
        assert_eq!(tables[1].rows.len(), 2);
        assert!(tables[2].rows.is_empty()); // nobody yields a 2-point difference
        assert_eq!(tables[1].rows[1][1], "0.8889");
        assert_eq!(tables[1].rows[1][4], "0.0000"); // single record

        // per-diff counts partition the total record count
        let total: usize = models.iter().map(|(_, r)| r.len()).sum();
        let rendered: usize = tables
            .iter()
            .flat_map(|t| t.rows.iter())
            .map(|row| row[5].parse::<usize>().unwrap())
            .sum();
        assert_eq!(rendered, total);
    }

    #[test]
    fn empty_corpus_gives_header_only_table() {
        let corpus = Corpus::new(ScoreScale::default(), vec![], vec![], vec![]).unwrap();
        let (table, notes) = consistency_table(&corpus, &[]).unwrap();
        assert_eq!(table.columns, vec!["Model", "Mean", "Std. Dev."]);
        assert!(table.rows.is_empty());
        assert!(notes.is_empty());
        assert_eq!(table.to_csv(), "Model,Mean,Std. Dev.\n");
    }

    #[test]
    fn rater_without_ratings_renders_undefined_cells() {
        let corpus = Corpus::new(
            ScoreScale::default(),
            vec![Essay {
                essay_id: "E1".into(),
                prompt_id: "P".into(),
                text: "t".into(),
            }],
            vec![
                RaterProfile {
                    rater_id: "A1".into(),
                    kind: RaterKind::Llm,
                    label: "A1".into(),
                },
                RaterProfile {
                    rater_id: "R1".into(),
                    kind: RaterKind::Human,
                    label: "R1".into(),
                },
            ],
            vec![Rating {
                essay_id: "E1".into(),
                rater_id: "R1".into(),
                score: 3,
                rationale: None,
            }],
        )
        .unwrap();
        let (table, notes) = consistency_table(&corpus, &["R1".to_string()]).unwrap();
        let a1 = &table.rows[0];
        assert_eq!(a1[1], UNDEFINED_CELL); // no ratings -> no mean
        assert_eq!(a1[3], UNDEFINED_CELL); // no shared essays
        assert!(notes.iter().any(|n| n.contains("no ratings")));
        assert!(notes.iter().any(|n| n.contains("no shared essays")));
    }

    #[test]
    fn csv_shape_and_escaping() {
        let table = TableArtifact {
            name: "t".into(),
            columns: vec!["Model".into(), "Std. Dev.".into()],
            rows: vec![vec!["a,b".into(), "quote\"inside".into()]],
        };
        let csv = table.to_csv();
        assert_eq!(
            csv,
            "Model,Std. Dev.\n\"a,b\",\"quote\"\"inside\"\n"
        );
    }
}
