//! # raterlens
//!
//! Analytics for comparing human and LLM essay raters: score-agreement
//! metrics (quadratic weighted kappa, normalized mutual information),
//! rationale similarity over text embeddings, PCA projections of rationale
//! embeddings, and deterministic table/figure emission.
//!
//! The crate is organized around a small data model ([`corpus`]) and a set
//! of pure analysis modules ([`agreement`], [`similarity`], [`reduce`]),
//! plus the plumbing needed to run the whole pipeline offline: a text
//! preprocessor ([`textprep`]), a pluggable embedding layer with a
//! deterministic fallback ([`embed`]), an LLM grading client
//! ([`raterclient`]), a synthetic corpus generator ([`fixtures`]), and
//! report emission ([`report`]). [`pipeline`] wires the stages together for
//! the `raterlens` binary.

pub mod agreement;
pub mod corpus;
pub mod embed;
pub mod fixtures;
pub mod ioutil;
pub mod pipeline;
pub mod raterclient;
pub mod reduce;
pub mod report;
pub mod selftest;
pub mod similarity;
pub mod textprep;
