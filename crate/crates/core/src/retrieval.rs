//! Lexical scoring: BM25, Dirichlet-smoothed query likelihood, and boolean-OR
//! execution of expanded queries.
//!
//! Queries are treated as sets of terms: a repeated term contributes once.
//! Per-document sums run over the distinct query terms in sorted order, so a
//! score does not depend on how the query terms were ordered.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::Index;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if self.k1.is_nan() || self.k1 < 0.0 || !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParam(format!(
                "BM25 needs k1 >= 0 and 0 <= b <= 1 (got k1={}, b={})",
                self.k1, self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QlParams {
    /// Dirichlet prior mass.
    pub mu: f64,
}

impl Default for QlParams {
    fn default() -> Self {
        QlParams { mu: 1000.0 }
    }
}

impl QlParams {
    pub fn validate(&self) -> Result<()> {
        if self.mu.is_nan() || self.mu <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "QL needs mu > 0 (got {})",
                self.mu
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    #[default]
    Bm25,
    Ql,
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm25" => Ok(ScorerKind::Bm25),
            "ql" => Ok(ScorerKind::Ql),
            other => Err(Error::Config(format!(
                "unknown scorer `{other}` (expected bm25|ql)"
            ))),
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorerKind::Bm25 => "bm25",
            ScorerKind::Ql => "ql",
        })
    }
}

/// A lexical scoring function together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scorer {
    Bm25(Bm25Params),
    Ql(QlParams),
}

impl Scorer {
    pub fn new(kind: ScorerKind, bm25: Bm25Params, ql: QlParams) -> Scorer {
        match kind {
            ScorerKind::Bm25 => Scorer::Bm25(bm25),
            ScorerKind::Ql => Scorer::Ql(ql),
        }
    }

    pub fn kind(&self) -> ScorerKind {
        match self {
            Scorer::Bm25(_) => ScorerKind::Bm25,
            Scorer::Ql(_) => ScorerKind::Ql,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Scorer::Bm25(p) => p.validate(),
            Scorer::Ql(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// How the clauses of a [`BooleanQuery`] are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BooleanMode {
    /// Score the deduplicated union of all clause terms.
    #[default]
    Union,
    /// Score each clause separately and keep a document's best clause score.
    MaxClause,
}

impl FromStr for BooleanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "union" => Ok(BooleanMode::Union),
            "max-clause" | "max_clause" => Ok(BooleanMode::MaxClause),
            other => Err(Error::Config(format!(
                "unknown boolean mode `{other}` (expected union|max-clause)"
            ))),
        }
    }
}

/// Disjunction of term sequences. The first clause is the original query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BooleanQuery {
    clauses: Vec<Vec<String>>,
}

impl BooleanQuery {
    /// Drops repeated clauses (keeping the first); rejects empty input.
    pub fn new(clauses: Vec<Vec<String>>) -> Result<Self> {
        if clauses.is_empty() {
            return Err(Error::InvalidParam(
                "boolean query needs at least one clause".into(),
            ));
        }
        if clauses.iter().any(Vec::is_empty) {
            return Err(Error::InvalidParam(
                "boolean query clauses must be non-empty".into(),
            ));
        }
        let mut seen = HashSet::new();
        let clauses = clauses
            .into_iter()
            .filter(|c| seen.insert(c.clone()))
            .collect();
        Ok(BooleanQuery { clauses })
    }

    pub fn single(terms: Vec<String>) -> Result<Self> {
        BooleanQuery::new(vec![terms])
    }

    pub fn clauses(&self) -> &[Vec<String>] {
        &self.clauses
    }

    pub fn original(&self) -> &[String] {
        &self.clauses[0]
    }

    /// All clause terms, deduplicated in order of first appearance.
    pub fn union_terms(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.clauses
            .iter()
            .flatten()
            .filter(|t| seen.insert(t.as_str()))
            .cloned()
            .collect()
    }
}

impl fmt::Display for BooleanQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" OR ")?;
            }
            write!(f, "\"{}\"", c.join(" "))?;
        }
        Ok(())
    }
}

/// Distinct in-vocabulary query terms, sorted, with their postings.
fn query_postings<'a>(terms: &[String], index: &'a Index) -> Vec<(&'a str, u32)> {
    let distinct: BTreeSet<&str> = terms.iter().map(String::as_str).collect();
    distinct
        .into_iter()
        .filter_map(|t| {
            index
                .term_ordinal(t)
                .map(|o| (index.terms()[o as usize].as_str(), o))
        })
        .collect()
}

fn candidates(index: &Index, qterms: &[(&str, u32)]) -> Vec<u32> {
    let mut docs: Vec<u32> = qterms
        .iter()
        .flat_map(|&(_, o)| index.postings_by_ordinal(o).iter().map(|p| p.doc))
        .collect();
    docs.sort_unstable();
    docs.dedup();
    docs
}

fn tf_of(index: &Index, term: u32, doc: u32) -> u32 {
    let list = index.postings_by_ordinal(term);
    list.binary_search_by_key(&doc, |p| p.doc)
        .map_or(0, |i| list[i].tf)
}

/// Scores every document matching at least one term; unsorted, keyed by ordinal.
pub(crate) fn score_candidates(
    terms: &[String],
    index: &Index,
    scorer: &Scorer,
) -> Vec<(u32, f64)> {
    let qterms = query_postings(terms, index);
    if qterms.is_empty() {
        return Vec::new();
    }
    let docs = candidates(index, &qterms);
    let stats = index.stats();
    let n = stats.num_docs as f64;
    match *scorer {
        Scorer::Bm25(Bm25Params { k1, b }) => {
            let idfs: Vec<f64> = qterms
                .iter()
                .map(|&(_, o)| {
                    let df = index.postings_by_ordinal(o).len() as f64;
                    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
                })
                .collect();
            docs.into_iter()
                .map(|d| {
                    let norm = k1 * (1.0 - b + b * index.doc_len(d) as f64 / stats.avg_doc_len);
                    let mut score = 0.0;
                    for (&(_, o), idf) in qterms.iter().zip(&idfs) {
                        let tf = tf_of(index, o, d) as f64;
                        if tf > 0.0 {
                            score += idf * tf * (k1 + 1.0) / (tf + norm);
                        }
                    }
                    (d, score)
                })
                .collect()
        }
        Scorer::Ql(QlParams { mu }) => {
            let total = stats.total_tokens as f64;
            let background: Vec<f64> = qterms
                .iter()
                .map(|&(t, _)| mu * index.cf(t) as f64 / total)
                .collect();
            docs.into_iter()
                .map(|d| {
                    let denom = index.doc_len(d) as f64 + mu;
                    let mut score = 0.0;
                    for (&(_, o), bg) in qterms.iter().zip(&background) {
                        let tf = tf_of(index, o, d) as f64;
                        score += ((tf + bg) / denom).ln();
                    }
                    (d, score)
                })
                .collect()
        }
    }
}

/// Score descending, then external doc id ascending.
pub(crate) fn rank(index: &Index, mut scored: Vec<(u32, f64)>, k: usize) -> Vec<ScoredDoc> {
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| index.doc_id(a.0).cmp(index.doc_id(b.0)))
    });
    scored.truncate(k);
    scored
        .into_iter()
        .map(|(d, score)| ScoredDoc {
            doc_id: index.doc_id(d).to_owned(),
            score,
        })
        .collect()
}

fn check_depth(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParam(
            "result depth must be at least 1".into(),
        ));
    }
    Ok(())
}

pub fn score(
    query_terms: &[String],
    index: &Index,
    scorer: &Scorer,
    k: usize,
) -> Result<Vec<ScoredDoc>> {
    check_depth(k)?;
    scorer.validate()?;
    Ok(rank(index, score_candidates(query_terms, index, scorer), k))
}

/// BM25 with `idf = ln(1 + (N - df + 0.5) / (df + 0.5))`.
pub fn score_bm25(
    query_terms: &[String],
    index: &Index,
    params: Bm25Params,
    k: usize,
) -> Result<Vec<ScoredDoc>> {
    score(query_terms, index, &Scorer::Bm25(params), k)
}

/// Dirichlet query likelihood over documents matching at least one query term.
/// Terms absent from the collection are ignored: their background probability
/// is zero and would add the same infinite penalty to every candidate.
pub fn score_ql(
    query_terms: &[String],
    index: &Index,
    params: QlParams,
    k: usize,
) -> Result<Vec<ScoredDoc>> {
    score(query_terms, index, &Scorer::Ql(params), k)
}

pub fn execute_boolean(
    query: &BooleanQuery,
    index: &Index,
    scorer: &Scorer,
    mode: BooleanMode,
    k: usize,
) -> Result<Vec<ScoredDoc>> {
    check_depth(k)?;
    scorer.validate()?;
    let scored = match mode {
        BooleanMode::Union => score_candidates(&query.union_terms(), index, scorer),
        BooleanMode::MaxClause => {
            let mut best: HashMap<u32, f64> = HashMap::new();
            for clause in query.clauses() {
                for (d, s) in score_candidates(clause, index, scorer) {
                    best.entry(d).and_modify(|b| *b = b.max(s)).or_insert(s);
                }
            }
            best.into_iter().collect()
        }
    };
    Ok(rank(index, scored, k))
}
