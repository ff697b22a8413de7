//! Score-agreement metrics between two raters over paired integer scores:
//! quadratic weighted kappa (QWK) and normalized mutual information (NMI).
//!
//! QWK is computed from observed/expected/weight matrices indexed over the
//! full rubric scale; NMI from the empirical joint distribution of the two
//! score sequences. Both are pure functions and safe to evaluate in
//! parallel across rater pairs.

use thiserror::Error;

use crate::corpus::ScoreScale;

#[derive(Debug, Error)]
pub enum AgreementError {
    #[error("at least 2 score categories are required, got {0}")]
    TooFewCategories(usize),
    #[error("no score pairs to analyze")]
    EmptyPairs,
    #[error("score {score} outside scale [{min}, {max}]")]
    ScoreOutOfScale { score: i32, min: i32, max: i32 },
    #[error("QWK undefined: chance disagreement mass is zero (constant ratings)")]
    UndefinedQwk,
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
}

/// Observed/expected/weight matrices over a `k`-category ordinal scale.
///
/// `observed[i][j]` counts pairs scored `i` by the first rater and `j` by
/// the second (indices are scale offsets, i.e. `score - min_score`).
/// `expected` is the chance-agreement matrix `n * p_a(i) * p_b(j)` built
/// from the two empirical marginals, and `weights` the quadratic penalty
/// `(i - j)^2 / (k - 1)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementTable {
    pub k: usize,
    pub observed: Vec<Vec<f64>>,
    pub expected: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
}

/// Quadratic disagreement weights: `W[i][j] = (i - j)^2 / (k - 1)^2`.
///
/// Symmetric, zero on the diagonal, 1.0 at the corners.
pub fn weight_matrix(k: usize) -> Result<Vec<Vec<f64>>, AgreementError> {
    if k < 2 {
        return Err(AgreementError::TooFewCategories(k));
    }
    let denom = ((k - 1) * (k - 1)) as f64;
    let mut w = vec![vec![0.0; k]; k];
    for (i, row) in w.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let d = i as f64 - j as f64;
            *cell = d * d / denom;
        }
    }
    Ok(w)
}

/// Build observed, expected, and weight matrices for a set of score pairs.
///
/// Matrix indices span the full rubric scale regardless of which scores
/// actually occur in the sample, so the weight matrix is the same for every
/// rater pair on the same scale.
pub fn build_table(
    pairs: &[(i32, i32)],
    scale: &ScoreScale,
) -> Result<AgreementTable, AgreementError> {
    if pairs.is_empty() {
        return Err(AgreementError::EmptyPairs);
    }
    let k = scale.k();
    let mut observed = vec![vec![0.0; k]; k];
    let mut marginal_a = vec![0.0; k];
    let mut marginal_b = vec![0.0; k];
    for &(a, b) in pairs {
        for s in [a, b] {
            if !scale.contains(s) {
                return Err(AgreementError::ScoreOutOfScale {
                    score: s,
                    min: scale.min_score,
                    max: scale.max_score,
                });
            }
        }
        let i = (a - scale.min_score) as usize;
        let j = (b - scale.min_score) as usize;
        observed[i][j] += 1.0;
        marginal_a[i] += 1.0;
        marginal_b[j] += 1.0;
    }
    let n = pairs.len() as f64;
    let mut expected = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            expected[i][j] = n * (marginal_a[i] / n) * (marginal_b[j] / n);
        }
    }
    Ok(AgreementTable {
        k,
        observed,
        expected,
        weights: weight_matrix(k)?,
    })
}

/// Quadratic weighted kappa: `1 - sum(O.W) / sum(E.W)`.
///
/// Errors with [`AgreementError::UndefinedQwk`] when the chance
/// disagreement mass `sum(E.W)` is zero (e.g. both raters constant); the
/// caller decides how to render that, never a silent NaN.
pub fn qwk(table: &AgreementTable) -> Result<f64, AgreementError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..table.k {
        for j in 0..table.k {
            num += table.observed[i][j] * table.weights[i][j];
            den += table.expected[i][j] * table.weights[i][j];
        }
    }
    if den <= 0.0 {
        return Err(AgreementError::UndefinedQwk);
    }
    Ok(1.0 - num / den)
}

/// Convenience: build the table and compute QWK in one call.
pub fn qwk_from_pairs(pairs: &[(i32, i32)], scale: &ScoreScale) -> Result<f64, AgreementError> {
    qwk(&build_table(pairs, scale)?)
}

/// Empirical joint distribution of two paired score sequences.
///
/// The support is the set of distinct observed values on each side (sorted
/// ascending); marginals are exact row/column sums of the joint.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    pub values_x: Vec<i32>,
    pub values_y: Vec<i32>,
    pub joint: Vec<Vec<f64>>,
    pub marginal_x: Vec<f64>,
    pub marginal_y: Vec<f64>,
}

pub fn joint_distribution(pairs: &[(i32, i32)]) -> Result<DiscreteJoint, AgreementError> {
    if pairs.is_empty() {
        return Err(AgreementError::EmptyPairs);
    }
    let mut values_x: Vec<i32> = pairs.iter().map(|p| p.0).collect();
    let mut values_y: Vec<i32> = pairs.iter().map(|p| p.1).collect();
    values_x.sort_unstable();
    values_x.dedup();
    values_y.sort_unstable();
    values_y.dedup();
    let n = pairs.len() as f64;
    let mut joint = vec![vec![0.0; values_y.len()]; values_x.len()];
    for &(a, b) in pairs {
        let i = values_x.binary_search(&a).expect("value is in support");
        let j = values_y.binary_search(&b).expect("value is in support");
        joint[i][j] += 1.0 / n;
    }
    let marginal_x: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
    let marginal_y: Vec<f64> = (0..values_y.len())
        .map(|j| joint.iter().map(|row| row[j]).sum())
        .collect();
    Ok(DiscreteJoint {
        values_x,
        values_y,
        joint,
        marginal_x,
        marginal_y,
    })
}

fn check_distribution(dist: &[f64]) -> Result<(), AgreementError> {
    if dist.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(AgreementError::InvalidDistribution(
            "negative or non-finite entry".into(),
        ));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(AgreementError::InvalidDistribution(format!(
            "entries sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Shannon entropy in nats, with the `0 * log 0 := 0` convention.
pub fn entropy(dist: &[f64]) -> Result<f64, AgreementError> {
    check_distribution(dist)?;
    let mut h = 0.0;
    for &p in dist {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    Ok(h.max(0.0))
}

/// Mutual information of a joint distribution, in nats.
///
/// Terms with zero joint mass contribute nothing; tiny negative rounding
/// residue is clamped to zero.
pub fn mutual_information(j: &DiscreteJoint) -> Result<f64, AgreementError> {
    check_distribution(&j.marginal_x)?;
    check_distribution(&j.marginal_y)?;
    let joint_total: f64 = j.joint.iter().flatten().sum();
    if (joint_total - 1.0).abs() > 1e-9 {
        return Err(AgreementError::InvalidDistribution(format!(
            "joint sums to {joint_total}, expected 1"
        )));
    }
    let mut mi = 0.0;
    for (x, row) in j.joint.iter().enumerate() {
        for (y, &pxy) in row.iter().enumerate() {
            if pxy > 0.0 {
                mi += pxy * (pxy / (j.marginal_x[x] * j.marginal_y[y])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Normalized mutual information: `2 * MI / (H(X) + H(Y))`, in `[0, 1]`.
///
/// MI is evaluated through the entropy identity
/// `H(X) + H(Y) - H(X, Y)`, which cancels exactly for identical labelings
/// (NMI is then 1.0 bit-for-bit) and agrees with the direct sum within
/// rounding. Degenerate conventions: both sides constant -> 1.0; exactly
/// one side constant -> 0.0. The result is clamped into `[0, 1]`.
pub fn nmi(pairs: &[(i32, i32)]) -> Result<f64, AgreementError> {
    let joint = joint_distribution(pairs)?;
    let hx = entropy(&joint.marginal_x)?;
    let hy = entropy(&joint.marginal_y)?;
    if hx == 0.0 && hy == 0.0 {
        return Ok(1.0);
    }
    if hx == 0.0 || hy == 0.0 {
        return Ok(0.0);
    }
    let flat: Vec<f64> = joint.joint.iter().flatten().copied().collect();
    let hxy = entropy(&flat)?;
    let mi = (hx + hy - hxy).max(0.0);
    Ok((2.0 * mi / (hx + hy)).clamp(0.0, 1.0))
}
