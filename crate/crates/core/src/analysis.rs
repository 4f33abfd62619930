//! Tokenization and term normalization.
//!
//! Every pipeline (indexing, expansion, AWE, affect scoring) runs text through
//! the same [`Analyzer`], so a term produced at index time is byte-identical to
//! the term looked up in an embedding vocabulary at query time.
//!
//! Tokens are maximal runs of Unicode letters and digits. Everything else
//! (whitespace, punctuation, hyphens, combining marks) separates tokens.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stemmer {
    #[default]
    None,
    Porter,
}

impl Stemmer {
    fn as_str(self) -> &'static str {
        match self {
            Stemmer::None => "none",
            Stemmer::Porter => "porter",
        }
    }
}

impl std::str::FromStr for Stemmer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Stemmer::None),
            "porter" => Ok(Stemmer::Porter),
            other => Err(Error::Config(format!(
                "unknown stemmer `{other}` (expected none|porter)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzerConfig {
    pub lowercase: bool,
    pub stopwords: BTreeSet<String>,
    pub stemmer: Stemmer,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            lowercase: true,
            stopwords: BTreeSet::new(),
            stemmer: Stemmer::None,
        }
    }
}

impl AnalyzerConfig {
    /// Canonical text form; the fingerprint is its hash.
    pub fn canonical(&self) -> String {
        let mut out = format!(
            "lowercase={};stemmer={};stopwords=",
            self.lowercase,
            self.stemmer.as_str()
        );
        for (i, w) in self.stopwords.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(w);
        }
        out
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(self.canonical().as_bytes())
    }
}

/// Reads a stopword file: one word per line, `#` starts a comment.
///
/// Entries are lowercased so they match tokens from a lowercasing analyzer.
pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect())
}

/// A ready-to-use analyzer built from an [`AnalyzerConfig`].
pub struct Analyzer {
    config: AnalyzerConfig,
    stemmer: Option<rust_stemmers::Stemmer>,
}

impl Analyzer {
    pub fn new(config: AnalyzerConfig) -> Self {
        let stemmer = match config.stemmer {
            Stemmer::None => None,
            Stemmer::Porter => Some(rust_stemmers::Stemmer::create(
                rust_stemmers::Algorithm::English,
            )),
        };
        Analyzer { config, stemmer }
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.config
    }

    pub fn analyze(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for raw in text.split(|c: char| !c.is_alphanumeric()) {
            if raw.is_empty() {
                continue;
            }
            if self.config.lowercase {
                // Lowercasing may emit non-alphanumeric chars (e.g. U+0130 -> "i\u{307}"),
                // so the lowered token is split again to keep the output a fixed point.
                let lowered = raw.to_lowercase();
                for piece in lowered.split(|c: char| !c.is_alphanumeric()) {
                    if !piece.is_empty() {
                        self.emit(piece, &mut out);
                    }
                }
            } else {
                self.emit(raw, &mut out);
            }
        }
        out
    }

    fn emit(&self, token: &str, out: &mut Vec<String>) {
        if self.config.stopwords.contains(token) {
            return;
        }
        match &self.stemmer {
            Some(stemmer) => out.push(stemmer.stem(token).into_owned()),
            None => out.push(token.to_owned()),
        }
    }
}

/// One-shot analysis; prefer [`Analyzer`] in loops.
pub fn analyze(text: &str, config: &AnalyzerConfig) -> Vec<String> {
    Analyzer::new(config.clone()).analyze(text)
}
