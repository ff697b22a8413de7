//! Preprocessing pipeline that converts raw rationale text into cleaned
//! token text for embedding and analysis.
//!
//! [`preprocess`] applies a fixed stage order: (1) lowercase, (2) remove
//! non-ASCII characters, (3) remove ASCII punctuation and other special
//! characters (digits are kept), (4) whitespace-tokenize, (5) remove
//! stopwords, (6) remove domain stopwords, (7) rejoin with single spaces.
//! Stopword matching is an exact whole-token match after lowercasing; no
//! stemming. All functions here are pure.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("failed to read stopword file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// Domain words removed in addition to the standard stopword list.
pub const DEFAULT_DOMAIN_STOPWORDS: [&str; 4] = ["example", "overall", "student", "email"];

/// Stopword sets plus the non-ASCII handling flag.
#[derive(Debug, Clone)]
pub struct PrepConfig {
    stopwords: HashSet<String>,
    domain_stopwords: HashSet<String>,
    pub strip_non_ascii: bool,
}

impl PrepConfig {
    /// Config with explicit stopword sets; entries are lowercased.
    pub fn new<I, J, S, T>(stopwords: I, domain_stopwords: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        Self {
            stopwords: stopwords
                .into_iter()
                .map(|s| s.as_ref().to_lowercase())
                .collect(),
            domain_stopwords: domain_stopwords
                .into_iter()
                .map(|s| s.as_ref().to_lowercase())
                .collect(),
            strip_non_ascii: true,
        }
    }

    /// Bundled English stopword list plus the default domain words.
    pub fn default_english() -> Self {
        Self::new(
            parse_stopword_lines(BUNDLED_STOPWORDS),
            DEFAULT_DOMAIN_STOPWORDS.iter().copied(),
        )
    }

    /// Add extra domain stopwords (lowercased) to this config.
    pub fn with_extra_domain_stopwords<I, S>(mut self, extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.domain_stopwords
            .extend(extra.into_iter().map(|s| s.as_ref().to_lowercase()));
        self
    }

    pub fn stopwords(&self) -> &HashSet<String> {
        &self.stopwords
    }

    pub fn domain_stopwords(&self) -> &HashSet<String> {
        &self.domain_stopwords
    }

    fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token) || self.domain_stopwords.contains(token)
    }
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self::default_english()
    }
}

fn parse_stopword_lines(content: &str) -> impl Iterator<Item = &str> {
    content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Load a stopword set from a file: one token per line, `#` comments ignored.
pub fn load_stopword_file(path: &Path) -> Result<HashSet<String>, PrepError> {
    let content = std::fs::read_to_string(path).map_err(|source| PrepError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_stopword_lines(&content)
        .map(|s| s.to_lowercase())
        .collect())
}

/// Cleaned token text: single-space-separated lowercase tokens.
///
/// With the default config every character is a lowercase ASCII letter,
/// digit, or single space, and no token belongs to either stopword set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CleanText(String);

impl CleanText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Display for CleanText {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Run the full preprocessing pipeline. Degenerate inputs yield empty text.
pub fn preprocess(raw: &str, config: &PrepConfig) -> CleanText {
    // Stage 1: lowercase.
    let lowered = raw.to_lowercase();
    // Stages 2-3: drop non-ASCII (scalar values above U+007F), then drop
    // ASCII punctuation and non-whitespace control characters. Deletion,
    // not space substitution: "well.another" fuses to "wellanother".
    let mut kept = String::with_capacity(lowered.len());
    for c in lowered.chars() {
        if !c.is_ascii() {
            if !config.strip_non_ascii {
                kept.push(c);
            }
            continue;
        }
        if c.is_ascii_alphanumeric() || c.is_ascii_whitespace() {
            kept.push(c);
        }
    }
    // Stages 4-7: tokenize, filter both stopword sets, rejoin.
    let tokens: Vec<&str> = kept
        .split_whitespace()
        .filter(|t| !config.is_stopword(t))
        .collect();
    CleanText(tokens.join(" "))
}

/// Split cleaned text into its tokens, preserving order.
pub fn tokenize(clean: &CleanText) -> Vec<String> {
    if clean.0.is_empty() {
        return Vec::new();
    }
    clean.0.split(' ').map(str::to_string).collect()
}
