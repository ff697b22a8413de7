//! Built-in oracle suites: brute-force agreement metrics, eigensolver
//! residual checks, and the preprocessing golden table.
//!
//! The oracles here are independent re-derivations (direct loops over the
//! defining formulas), deliberately sharing no code with the modules they
//! check. `raterlens selftest` runs them all; the test suites reuse the
//! same oracles at higher instance counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agreement;
use crate::corpus::ScoreScale;
use crate::reduce;
use crate::textprep::{preprocess, PrepConfig};

/// Brute-force QWK: direct triple-loop construction of O, E, and W.
/// Returns `None` when the chance disagreement mass is zero.
pub fn brute_force_qwk(xs: &[i32], ys: &[i32], min_score: i32, max_score: i32) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let k = (max_score - min_score + 1) as usize;
    let n = xs.len() as f64;
    let mut observed = vec![vec![0.0f64; k]; k];
    for (&x, &y) in xs.iter().zip(ys) {
        observed[(x - min_score) as usize][(y - min_score) as usize] += 1.0;
    }
    let mut row = vec![0.0f64; k];
    let mut col = vec![0.0f64; k];
    for i in 0..k {
        for j in 0..k {
            row[i] += observed[i][j];
            col[j] += observed[i][j];
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = ((i as f64) - (j as f64)).powi(2) / ((k - 1) as f64).powi(2);
            num += observed[i][j] * w;
            den += row[i] * col[j] / n * w;
        }
    }
    if den == 0.0 {
        return None;
    }
    Some(1.0 - num / den)
}

/// Brute-force NMI over the empirical joint, with an arbitrary logarithm so
/// base invariance can be checked directly.
pub fn brute_force_nmi(xs: &[i32], ys: &[i32], log: fn(f64) -> f64) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty());
    let n = xs.len() as f64;
    let mut vx: Vec<i32> = xs.to_vec();
    vx.sort_unstable();
    vx.dedup();
    let mut vy: Vec<i32> = ys.to_vec();
    vy.sort_unstable();
    vy.dedup();
    let mut joint = vec![vec![0.0f64; vy.len()]; vx.len()];
    for (&x, &y) in xs.iter().zip(ys) {
        let i = vx.iter().position(|&v| v == x).unwrap();
        let j = vy.iter().position(|&v| v == y).unwrap();
        joint[i][j] += 1.0 / n;
    }
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..vy.len()).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let h = |p: &[f64]| -> f64 {
        -p.iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v * log(v))
            .sum::<f64>()
    };
    let hx = h(&px);
    let hy = h(&py);
    if hx == 0.0 && hy == 0.0 {
        return 1.0;
    }
    if hx == 0.0 || hy == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for (i, r) in joint.iter().enumerate() {
        for (j, &pxy) in r.iter().enumerate() {
            if pxy > 0.0 {
                mi += pxy * log(pxy / (px[i] * py[j]));
            }
        }
    }
    (2.0 * mi / (hx + hy)).clamp(0.0, 1.0)
}

/// Golden preprocessing cases for the default English config: mixed-script,
/// punctuation, stopword, and domain-stopword inputs, derived by hand from
/// the seven pipeline stages.
pub const PREPROCESS_GOLDENS: [(&str, &str); 25] = [
    ("", ""),
    ("Overall, the student writes well. 很好", "writes well"),
    ("例子例子", ""),
    ("Hello, World!", "hello world"),
    (
        "The quick brown fox jumps over the lazy dog.",
        "quick brown fox jumps lazy dog",
    ),
    ("Don't stop believing", "dont stop believing"),
    ("  multiple   spaces\tand\ttabs  ", "multiple spaces tabs"),
    ("Email example: overall student performance", "performance"),
    ("A1 b2 C3!", "a1 b2 c3"),
    ("café naïve résumé", "caf nave rsum"),
    ("STUDENTS love EXAMPLES", "students love examples"),
    ("中文 english 混合 text", "english text"),
    ("score: 6/6 (excellent)", "score 66 excellent"),
    ("it's it is its", ""),
    ("well-written essay!", "wellwritten essay"),
    ("The THE the tHe", ""),
    ("student's rationale", "students rationale"),
    ("#hashtag @mention 50%", "hashtag mention 50"),
    ("ＦＵＬＬＷＩＤＴＨ letters", "letters"),
    ("über café mit Käse", "ber caf mit kse"),
    ("rationale\nwith\nnewlines", "rationale newlines"),
    ("e.g. i.e. etc.", "eg ie etc"),
    ("The essay’s structure", "essays structure"),
    ("1234 5678", "1234 5678"),
    ("o O oh", "oh"),
];

/// Fault-injection hooks so tests can prove the oracles catch deviations.
#[derive(Debug, Default, Clone, Copy)]
pub struct Hooks {
    /// Added to one off-diagonal weight cell before QWK is computed.
    pub qwk_weight_nudge: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelftestReport {
    pub suites: Vec<SuiteResult>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for suite in &self.suites {
            let tag = if suite.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("[{tag}] {}: {}\n", suite.name, suite.detail));
        }
        let verdict = if self.all_passed() { "ok" } else { "FAILED" };
        out.push_str(&format!(
            "selftest result: {verdict} ({} suites)\n",
            self.suites.len()
        ));
        out
    }
}

fn random_pairs(rng: &mut ChaCha8Rng, max_n: usize) -> Vec<(i32, i32)> {
    let n = rng.gen_range(2..=max_n);
    (0..n)
        .map(|_| (rng.gen_range(0..=6), rng.gen_range(0..=6)))
        .collect()
}

fn qwk_suite(hooks: &Hooks) -> SuiteResult {
    let scale = ScoreScale::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut checked = 0usize;
    for case in 0..100 {
        let pairs = random_pairs(&mut rng, 50);
        let xs: Vec<i32> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<i32> = pairs.iter().map(|p| p.1).collect();
        let oracle = brute_force_qwk(&xs, &ys, 0, 6);
        let mut table = match agreement::build_table(&pairs, &scale) {
            Ok(t) => t,
            Err(e) => {
                return SuiteResult {
                    name: "qwk-oracle",
                    passed: false,
                    detail: format!("case {case}: table build failed: {e}"),
                }
            }
        };
        if let Some(nudge) = hooks.qwk_weight_nudge {
            table.weights[0][1] += nudge;
        }
        let ours = agreement::qwk(&table).ok();
        match (oracle, ours) {
            (Some(expected), Some(got)) if (expected - got).abs() <= 1e-12 => checked += 1,
            (None, None) => checked += 1,
            other => {
                return SuiteResult {
                    name: "qwk-oracle",
                    passed: false,
                    detail: format!("case {case}: oracle/impl mismatch {other:?}"),
                }
            }
        }
    }
    // hand cases
    let ladder = [(1, 2), (2, 3), (3, 4), (4, 5)];
    let hand = [
        (
            agreement::qwk_from_pairs(&ladder, &scale).ok(),
            Some(5.0 / 7.0),
            "ladder",
        ),
        (
            agreement::qwk_from_pairs(&[(0, 0), (3, 3), (6, 6)], &scale).ok(),
            Some(1.0),
            "identity",
        ),
        (
            agreement::qwk_from_pairs(&[(0, 6), (6, 0)], &scale).ok(),
            Some(-1.0),
            "extremes",
        ),
    ];
    for (got, expected, name) in hand {
        let ok = match (got, expected) {
            (Some(g), Some(e)) => (g - e).abs() <= 1e-12,
            _ => false,
        };
        if !ok {
            return SuiteResult {
                name: "qwk-oracle",
                passed: false,
                detail: format!("hand case {name}: got {got:?}, expected {expected:?}"),
            };
        }
    }
    SuiteResult {
        name: "qwk-oracle",
        passed: true,
        detail: format!("{checked} random instances + 3 hand cases within 1e-12"),
    }
}

fn nmi_suite() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut checked = 0usize;
    for case in 0..100 {
        let pairs = random_pairs(&mut rng, 50);
        let xs: Vec<i32> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<i32> = pairs.iter().map(|p| p.1).collect();
        let got = match agreement::nmi(&pairs) {
            Ok(v) => v,
            Err(e) => {
                return SuiteResult {
                    name: "nmi-oracle",
                    passed: false,
                    detail: format!("case {case}: {e}"),
                }
            }
        };
        let nats = brute_force_nmi(&xs, &ys, f64::ln);
        let bits = brute_force_nmi(&xs, &ys, f64::log2);
        let swapped: Vec<(i32, i32)> = pairs.iter().map(|&(a, b)| (b, a)).collect();
        let sym = agreement::nmi(&swapped).expect("non-empty");
        if (got - nats).abs() > 1e-12 || (got - bits).abs() > 1e-12 || (got - sym).abs() > 1e-12 {
            return SuiteResult {
                name: "nmi-oracle",
                passed: false,
                detail: format!(
                    "case {case}: impl {got}, oracle(ln) {nats}, oracle(log2) {bits}, swapped {sym}"
                ),
            };
        }
        checked += 1;
    }
    let degenerate_ok = agreement::nmi(&[(3, 3), (3, 3)]).unwrap() == 1.0
        && agreement::nmi(&[(3, 0), (3, 1)]).unwrap() == 0.0;
    if !degenerate_ok {
        return SuiteResult {
            name: "nmi-oracle",
            passed: false,
            detail: "degenerate conventions violated".into(),
        };
    }
    SuiteResult {
        name: "nmi-oracle",
        passed: true,
        detail: format!("{checked} random instances, symmetry + log-base invariance within 1e-12"),
    }
}

// Index loops mirror the triangular/symmetric matrix updates.
#[allow(clippy::needless_range_loop)]
fn eigen_suite() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut checked = 0usize;
    for case in 0..25 {
        let d = rng.gen_range(2..=8usize);
        let mut c = vec![vec![0.0f64; d]; d];
        for i in 0..d {
            for j in i..d {
                let v = rng.gen_range(-4.0..4.0);
                c[i][j] = v;
                c[j][i] = v;
            }
        }
        let norm = c
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        let (values, vectors) = match reduce::symmetric_eigen(&c) {
            Ok(v) => v,
            Err(e) => {
                return SuiteResult {
                    name: "eigen-residuals",
                    passed: false,
                    detail: format!("case {case}: {e}"),
                }
            }
        };
        for (l, v) in values.iter().zip(&vectors) {
            let mut res = 0.0;
            for i in 0..d {
                let cv: f64 = (0..d).map(|j| c[i][j] * v[j]).sum();
                res += (cv - l * v[i]).powi(2);
            }
            if res.sqrt() > 1e-8 * norm {
                return SuiteResult {
                    name: "eigen-residuals",
                    passed: false,
                    detail: format!("case {case}: residual {} above bound", res.sqrt()),
                };
            }
        }
        let trace: f64 = (0..d).map(|i| c[i][i]).sum();
        let total: f64 = values.iter().sum();
        if (trace - total).abs() > 1e-8 * norm.max(1.0) {
            return SuiteResult {
                name: "eigen-residuals",
                passed: false,
                detail: format!("case {case}: trace {trace} vs eigenvalue sum {total}"),
            };
        }
        checked += 1;
    }
    // closed-form 2x2
    let (values, _) = reduce::symmetric_eigen(&[vec![5.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let root5 = 5f64.sqrt();
    if (values[0] - (3.0 + root5)).abs() > 1e-10 || (values[1] - (3.0 - root5)).abs() > 1e-10 {
        return SuiteResult {
            name: "eigen-residuals",
            passed: false,
            detail: format!("closed-form case failed: {values:?}"),
        };
    }
    // dual/direct agreement on a wide matrix
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let x = reduce::DataMatrix::from_rows(rows).expect("valid rows");
    let direct = reduce::pca_fit_direct(&x, 3).expect("direct fit");
    let dual = reduce::pca_fit_dual(&x, 3).expect("dual fit");
    for (a, b) in direct.eigenvalues.iter().zip(&dual.eigenvalues) {
        if (a - b).abs() > 1e-8 {
            return SuiteResult {
                name: "eigen-residuals",
                passed: false,
                detail: format!("dual/direct eigenvalue gap {} exceeds 1e-8", (a - b).abs()),
            };
        }
    }
    SuiteResult {
        name: "eigen-residuals",
        passed: true,
        detail: format!(
            "{checked} random matrices + closed form + dual/direct agreement within bounds"
        ),
    }
}

fn preprocess_suite() -> SuiteResult {
    let config = PrepConfig::default_english();
    for (i, (input, expected)) in PREPROCESS_GOLDENS.iter().enumerate() {
        let once = preprocess(input, &config);
        if once.as_str() != *expected {
            return SuiteResult {
                name: "preprocess-goldens",
                passed: false,
                detail: format!(
                    "case {i}: input {input:?} produced {:?}, expected {expected:?}",
                    once.as_str()
                ),
            };
        }
        let twice = preprocess(once.as_str(), &config);
        if twice != once {
            return SuiteResult {
                name: "preprocess-goldens",
                passed: false,
                detail: format!("case {i}: not idempotent"),
            };
        }
    }
    SuiteResult {
        name: "preprocess-goldens",
        passed: true,
        detail: format!(
            "{} golden cases byte-exact and idempotent",
            PREPROCESS_GOLDENS.len()
        ),
    }
}

/// Run every suite and collect one result per invariant family.
pub fn run(hooks: &Hooks) -> SelftestReport {
    SelftestReport {
        suites: vec![qwk_suite(hooks), nmi_suite(), eigen_suite(), preprocess_suite()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_build_passes() {
        let report = run(&Hooks::default());
        assert!(report.all_passed(), "{}", report.render_text());
    }

    #[test]
    fn perturbed_weight_matrix_is_caught_and_named() {
        let report = run(&Hooks {
            qwk_weight_nudge: Some(0.05),
        });
        assert!(!report.all_passed());
        let failing: Vec<&str> = report
            .suites
            .iter()
            .filter(|s| !s.passed)
            .map(|s| s.name)
            .collect();
        assert_eq!(failing, vec!["qwk-oracle"]);
    }

    #[test]
    fn report_text_is_deterministic() {
        let a = run(&Hooks::default()).render_text();
        let b = run(&Hooks::default()).render_text();
        assert_eq!(a, b);
        assert!(a.contains("[PASS] qwk-oracle"));
    }
}
