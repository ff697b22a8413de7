//! PCA over rationale embeddings, built from first principles:
//! mean-centering, covariance with divisor n, cyclic-Jacobi symmetric
//! eigendecomposition, and 2-D projection of matched-score rationale sets.
//!
//! When there are fewer observations than dimensions the fit switches to
//! the dual form: eigendecompose the n x n Gram matrix and map its
//! eigenvectors back through the data, which agrees with the direct path
//! to within 1e-8.

// Index loops mirror the triangular/symmetric matrix updates.
#![allow(clippy::needless_range_loop)]

use thiserror::Error;

use crate::corpus::{Corpus, RaterKind};
use crate::embed::{EmbedTextMode, EmbeddingStore};

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("data matrix must have at least one row")]
    EmptyMatrix,
    #[error("row {row} has dimension {got}, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("data matrix contains a non-finite entry")]
    NonFinite,
    #[error("matrix is not symmetric within tolerance at ({i}, {j})")]
    Asymmetric { i: usize, j: usize },
    #[error("Jacobi rotation did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("requested {k} components, valid range is 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("row dimension {got} does not match model dimension {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("unknown rater {rater_id:?}")]
    UnknownRater { rater_id: String },
    #[error("score level {score} outside scale [{min}, {max}]")]
    ScoreOutOfScale { score: i32, min: i32, max: i32 },
    #[error("embedding missing for rationale of essay {essay_id:?} by rater {rater_id:?}")]
    MissingEmbedding { essay_id: String, rater_id: String },
}

/// Identifies the observation behind one row of a [`DataMatrix`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowKey {
    pub essay_id: String,
    pub rater_id: String,
}

/// n observation vectors of uniform dimension d, with per-row identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: Vec<Vec<f64>>,
    row_keys: Vec<RowKey>,
}

impl DataMatrix {
    pub fn new(rows: Vec<Vec<f64>>, row_keys: Vec<RowKey>) -> Result<Self, ReduceError> {
        if rows.is_empty() {
            return Err(ReduceError::EmptyMatrix);
        }
        let d = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(ReduceError::RaggedRow {
                    row: i,
                    got: row.len(),
                    expected: d,
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ReduceError::NonFinite);
            }
        }
        debug_assert_eq!(rows.len(), row_keys.len());
        Ok(Self { rows, row_keys })
    }

    /// Rows without identity, for plain numeric use.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ReduceError> {
        let keys = (0..rows.len())
            .map(|i| RowKey {
                essay_id: format!("row{i}"),
                rater_id: String::new(),
            })
            .collect();
        Self::new(rows, keys)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn d(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row_keys(&self) -> &[RowKey] {
        &self.row_keys
    }
}

/// Subtract the column means; returns the centered matrix and the mean.
pub fn mean_center(x: &DataMatrix) -> (DataMatrix, Vec<f64>) {
    let n = x.n() as f64;
    let d = x.d();
    let mut mean = vec![0.0; d];
    for row in x.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let rows = x
        .rows()
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    (
        DataMatrix {
            rows,
            row_keys: x.row_keys.clone(),
        },
        mean,
    )
}

/// Covariance divisor convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovDivisor {
    /// Divide by n (the default here).
    N,
    /// Divide by n - 1.
    NMinusOne,
}

impl CovDivisor {
    fn value(self, n: usize) -> f64 {
        match self {
            CovDivisor::N => n as f64,
            CovDivisor::NMinusOne => (n.max(2) - 1) as f64,
        }
    }
}

/// `C = (1/n) X^T X` over a centered matrix.
pub fn covariance(xc: &DataMatrix) -> Vec<Vec<f64>> {
    covariance_with(xc, CovDivisor::N)
}

pub fn covariance_with(xc: &DataMatrix, divisor: CovDivisor) -> Vec<Vec<f64>> {
    let d = xc.d();
    let denom = divisor.value(xc.n());
    let mut c = vec![vec![0.0; d]; d];
    for row in xc.rows() {
        for i in 0..d {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for j in i..d {
                c[i][j] += ri * row[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            c[i][j] /= denom;
            c[j][i] = c[i][j];
        }
    }
    c
}

/// Gram matrix `(1/n) X X^T` over a centered matrix (dual form).
fn gram_matrix(xc: &DataMatrix, divisor: CovDivisor) -> Vec<Vec<f64>> {
    let n = xc.n();
    let denom = divisor.value(n);
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let dot: f64 = xc.rows[i].iter().zip(&xc.rows[j]).map(|(a, b)| a * b).sum();
            g[i][j] = dot / denom;
            g[j][i] = g[i][j];
        }
    }
    g
}

fn frobenius(m: &[Vec<f64>]) -> f64 {
    m.iter()
        .flat_map(|row| row.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

fn off_diagonal_frobenius(m: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i != j {
                sum += v * v;
            }
        }
    }
    sum.sqrt()
}

/// Flip each vector so its largest-magnitude component is positive; ties go
/// to the lowest index. Keeps eigenvector output reproducible.
fn fix_sign(v: &mut [f64]) {
    let mut arg = 0;
    let mut best = v[0].abs();
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x.abs() > best {
            best = x.abs();
            arg = i;
        }
    }
    if v[arg] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order (stable for ties) and matching
/// orthonormal eigenvectors under the deterministic sign convention.
/// Iterates until the off-diagonal Frobenius norm falls below
/// `1e-12 * ||C||_F` or 100 sweeps elapse.
pub fn symmetric_eigen(c: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>), ReduceError> {
    let n = c.len();
    if n == 0 {
        return Err(ReduceError::EmptyMatrix);
    }
    let norm = frobenius(c);
    let sym_tol = 1e-9 * norm.max(1.0);
    for i in 0..n {
        if c[i].len() != n {
            return Err(ReduceError::RaggedRow {
                row: i,
                got: c[i].len(),
                expected: n,
            });
        }
        for j in (i + 1)..n {
            if (c[i][j] - c[j][i]).abs() > sym_tol {
                return Err(ReduceError::Asymmetric { i, j });
            }
        }
    }

    let mut a: Vec<Vec<f64>> = c.to_vec();
    // Symmetrize roundoff-level noise before iterating.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = avg;
            a[j][i] = avg;
        }
    }
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    let threshold = 1e-12 * norm;
    let mut converged = norm == 0.0 || n == 1;
    for _ in 0..MAX_SWEEPS {
        if converged || off_diagonal_frobenius(&a) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    0.0
                };
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;

                let app = a[p][p];
                let aqq = a[q][q];
                a[p][p] = app - t * apq;
                a[q][q] = aqq + t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = cos * aip - sin * aiq;
                    a[p][i] = a[i][p];
                    a[i][q] = sin * aip + cos * aiq;
                    a[q][i] = a[i][q];
                }
                for row in v.iter_mut() {
                    let vip = row[p];
                    let viq = row[q];
                    row[p] = cos * vip - sin * viq;
                    row[q] = sin * vip + cos * viq;
                }
            }
        }
    }
    if !converged && off_diagonal_frobenius(&a) > threshold {
        return Err(ReduceError::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable descending sort preserves Jacobi order for equal eigenvalues.
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).expect("finite eigenvalues"));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let mut eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| (0..n).map(|row| v[row][col]).collect())
        .collect();
    for vec in &mut eigenvectors {
        fix_sign(vec);
    }
    Ok((eigenvalues, eigenvectors))
}

/// Mean vector, orthonormal components (descending eigenvalue order), and
/// eigenvalues of a fitted PCA.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }
}

fn check_k(k: usize, n: usize, d: usize) -> Result<(), ReduceError> {
    let max = n.min(d);
    if k == 0 || k > max {
        return Err(ReduceError::KOutOfRange { k, max });
    }
    Ok(())
}

/// Fit by eigendecomposing the d x d covariance matrix.
pub fn pca_fit_direct(x: &DataMatrix, k: usize) -> Result<PcaModel, ReduceError> {
    pca_fit_direct_with(x, k, CovDivisor::N)
}

pub fn pca_fit_direct_with(
    x: &DataMatrix,
    k: usize,
    divisor: CovDivisor,
) -> Result<PcaModel, ReduceError> {
    check_k(k, x.n(), x.d())?;
    let (xc, mean) = mean_center(x);
    let c = covariance_with(&xc, divisor);
    let (values, vectors) = symmetric_eigen(&c)?;
    Ok(PcaModel {
        mean,
        components: vectors.into_iter().take(k).collect(),
        eigenvalues: values.into_iter().take(k).map(|l| l.max(0.0)).collect(),
    })
}

/// Fit via the n x n Gram matrix, mapping eigenvectors back through the
/// data. Used when n < d; agrees with the direct path within 1e-8.
pub fn pca_fit_dual(x: &DataMatrix, k: usize) -> Result<PcaModel, ReduceError> {
    pca_fit_dual_with(x, k, CovDivisor::N)
}

pub fn pca_fit_dual_with(
    x: &DataMatrix,
    k: usize,
    divisor: CovDivisor,
) -> Result<PcaModel, ReduceError> {
    check_k(k, x.n(), x.d())?;
    let (xc, mean) = mean_center(x);
    let d = xc.d();
    let g = gram_matrix(&xc, divisor);
    let (values, uvecs) = symmetric_eigen(&g)?;
    let lambda_max = values.first().map(|v| v.max(0.0)).unwrap_or(0.0);
    let rank_tol = lambda_max * 1e-10;

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for i in 0..k {
        let lambda = values[i].max(0.0);
        eigenvalues.push(lambda);
        if lambda > rank_tol && lambda > 0.0 {
            // v = X^T u, renormalized.
            let u = &uvecs[i];
            let mut v = vec![0.0; d];
            for (row, &weight) in xc.rows().iter().zip(u.iter()) {
                for (acc, &x) in v.iter_mut().zip(row) {
                    *acc += weight * x;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut v {
                *x /= norm;
            }
            fix_sign(&mut v);
            components.push(v);
        } else {
            components.push(orthonormal_completion(&components, d));
        }
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

// Deterministic fill-in for a null direction: the standard basis vector
// with the largest residual after Gram-Schmidt against the fixed
// components, normalized and sign-fixed.
fn orthonormal_completion(components: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for j in 0..d {
        let mut candidate = vec![0.0; d];
        candidate[j] = 1.0;
        for comp in components {
            let proj: f64 = candidate.iter().zip(comp).map(|(a, b)| a * b).sum();
            for (c, &w) in candidate.iter_mut().zip(comp) {
                *c -= proj * w;
            }
        }
        let norm = candidate.iter().map(|x| x * x).sum::<f64>().sqrt();
        if best.as_ref().map(|(b, _)| norm > *b).unwrap_or(true) {
            best = Some((norm, candidate));
        }
    }
    let (norm, mut v) = best.expect("d > 0");
    for x in &mut v {
        *x /= norm;
    }
    fix_sign(&mut v);
    v
}

/// Fit the top-k principal components of the covariance of `x`.
///
/// Chooses the direct path when `n >= d` and the dual path otherwise.
pub fn pca_fit(x: &DataMatrix, k: usize) -> Result<PcaModel, ReduceError> {
    pca_fit_with(x, k, CovDivisor::N)
}

pub fn pca_fit_with(
    x: &DataMatrix,
    k: usize,
    divisor: CovDivisor,
) -> Result<PcaModel, ReduceError> {
    if x.n() >= x.d() {
        pca_fit_direct_with(x, k, divisor)
    } else {
        pca_fit_dual_with(x, k, divisor)
    }
}

/// Project rows onto the model: `(rows - mean) . components`, n x k.
pub fn pca_project(model: &PcaModel, x: &DataMatrix) -> Result<Vec<Vec<f64>>, ReduceError> {
    if x.d() != model.d() {
        return Err(ReduceError::DimMismatch {
            expected: model.d(),
            got: x.d(),
        });
    }
    Ok(x.rows()
        .iter()
        .map(|row| {
            model
                .components
                .iter()
                .map(|comp| {
                    row.iter()
                        .zip(&model.mean)
                        .zip(comp)
                        .map(|((v, m), c)| (v - m) * c)
                        .sum()
                })
                .collect()
        })
        .collect())
}

/// One 2-D projected rationale embedding, labeled by rater and essay.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LabeledPoint {
    pub rater_id: String,
    pub essay_id: String,
    pub x: f64,
    pub y: f64,
}

/// Result of a matched-score projection request.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionOutcome {
    Points(Vec<LabeledPoint>),
    /// Fewer than 2 usable points at this score level; no figure.
    InsufficientData { available: usize },
}

/// Pool the rationale embeddings of every LLM rater whose score equals the
/// reference rater's score equals `score_level` on the same essay
/// (optionally plus the reference's own rationales for those essays), fit a
/// 2-component PCA on the pooled set, and project it.
pub fn matched_score_projection(
    corpus: &Corpus,
    store: &EmbeddingStore,
    score_level: i32,
    reference_rater: &str,
    include_reference: bool,
    mode: EmbedTextMode<'_>,
) -> Result<ProjectionOutcome, ReduceError> {
    let scale = corpus.scale();
    if !scale.contains(score_level) {
        return Err(ReduceError::ScoreOutOfScale {
            score: score_level,
            min: scale.min_score,
            max: scale.max_score,
        });
    }
    if corpus.rater(reference_rater).is_none() {
        return Err(ReduceError::UnknownRater {
            rater_id: reference_rater.to_string(),
        });
    }

    let mut essay_ids: Vec<&str> = corpus
        .essays()
        .iter()
        .map(|e| e.essay_id.as_str())
        .collect();
    essay_ids.sort_unstable();

    // (rater, essay) -> embedding rows, LLM raters first, all sorted.
    let mut selected: Vec<(RowKey, Vec<f64>)> = Vec::new();
    let mut matched_essays: Vec<&str> = Vec::new();
    for llm in corpus.rater_ids_of_kind(RaterKind::Llm) {
        if llm == reference_rater {
            continue;
        }
        for essay_id in &essay_ids {
            let (Some(rl), Some(rr)) = (
                corpus.rating(essay_id, &llm),
                corpus.rating(essay_id, reference_rater),
            ) else {
                continue;
            };
            if rl.score != score_level || rr.score != score_level {
                continue;
            }
            if !matched_essays.contains(essay_id) {
                matched_essays.push(essay_id);
            }
            let Some(raw) = rl.rationale.as_deref() else {
                continue;
            };
            let text = mode.embedded_text(raw);
            if text.is_empty() {
                continue;
            }
            let vector = store
                .get_text(&text)
                .ok_or_else(|| ReduceError::MissingEmbedding {
                    essay_id: essay_id.to_string(),
                    rater_id: llm.clone(),
                })?;
            selected.push((
                RowKey {
                    essay_id: essay_id.to_string(),
                    rater_id: llm.clone(),
                },
                vector.values().to_vec(),
            ));
        }
    }
    if include_reference {
        matched_essays.sort_unstable();
        for essay_id in matched_essays {
            let Some(rating) = corpus.rating(essay_id, reference_rater) else {
                continue;
            };
            let Some(raw) = rating.rationale.as_deref() else {
                continue;
            };
            let text = mode.embedded_text(raw);
            if text.is_empty() {
                continue;
            }
            let vector = store
                .get_text(&text)
                .ok_or_else(|| ReduceError::MissingEmbedding {
                    essay_id: essay_id.to_string(),
                    rater_id: reference_rater.to_string(),
                })?;
            selected.push((
                RowKey {
                    essay_id: essay_id.to_string(),
                    rater_id: reference_rater.to_string(),
                },
                vector.values().to_vec(),
            ));
        }
    }
    selected.sort_by(|a, b| {
        (&a.0.rater_id, &a.0.essay_id).cmp(&(&b.0.rater_id, &b.0.essay_id))
    });

    if selected.len() < 2 {
        return Ok(ProjectionOutcome::InsufficientData {
            available: selected.len(),
        });
    }
    let (keys, rows): (Vec<RowKey>, Vec<Vec<f64>>) = selected.into_iter().unzip();
    let matrix = DataMatrix::new(rows, keys)?;
    let model = pca_fit(&matrix, 2)?;
    let coords = pca_project(&model, &matrix)?;
    let points = matrix
        .row_keys()
        .iter()
        .zip(coords)
        .map(|(key, xy)| LabeledPoint {
            rater_id: key.rater_id.clone(),
            essay_id: key.essay_id.clone(),
            x: xy[0],
            y: xy[1],
        })
        .collect();
    Ok(ProjectionOutcome::Points(points))
}
