//! Averaged word embedding (AWE) ranking.
//!
//! A text becomes one vector by aggregating the embeddings of its terms;
//! documents are ranked by cosine against the query vector. Three
//! aggregations are available:
//!
//! * `Mean`: plain average over in-vocabulary term occurrences.
//! * `TfidfWeighted`: average weighted by `g(w) = tf(w) * idf(w)`.
//! * `TfidfDivided`: sum of `v_w / g(w)`, L2-normalized.
//!
//! `g` is computed once per distinct term; idf comes from the index
//! (`ln((N + 1) / (df + 1)) + 1`). Under the TF-IDF weightings a term the
//! index has never seen is skipped like an out-of-vocabulary word.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::Analyzer;
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::index::{smoothed_idf, Index};
use crate::ingest::Topic;
use crate::pipeline::{run_topics, RunOptions, RunOutcome, TopicResult};
use crate::retrieval::{
    rank, score_candidates, Bm25Params, QlParams, ScoredDoc, Scorer, ScorerKind,
};

/// Score given to documents without a usable vector; below any cosine.
pub const ABSENT_SCORE: f64 = -2.0;

const CACHE_MAGIC: &[u8; 8] = b"EMBIRAWE";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Mean,
    #[default]
    TfidfWeighted,
    TfidfDivided,
}

impl Weighting {
    fn code(self) -> u8 {
        match self {
            Weighting::Mean => 0,
            Weighting::TfidfWeighted => 1,
            Weighting::TfidfDivided => 2,
        }
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Weighting::Mean),
            "tfidf_weighted" => Ok(Weighting::TfidfWeighted),
            "tfidf_divided" => Ok(Weighting::TfidfDivided),
            other => Err(Error::Config(format!(
                "unknown weighting `{other}` (expected mean|tfidf_weighted|tfidf_divided)"
            ))),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Mean => "mean",
            Weighting::TfidfWeighted => "tfidf_weighted",
            Weighting::TfidfDivided => "tfidf_divided",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AweConfig {
    pub weighting: Weighting,
    /// Number of lexical candidates to rerank; 0 scores every document.
    pub rerank_depth: usize,
    pub candidate_scorer: ScorerKind,
    pub bm25: Bm25Params,
    pub ql: QlParams,
}

impl Default for AweConfig {
    fn default() -> Self {
        AweConfig {
            weighting: Weighting::TfidfWeighted,
            rerank_depth: 1000,
            candidate_scorer: ScorerKind::Bm25,
            bm25: Bm25Params::default(),
            ql: QlParams::default(),
        }
    }
}

impl AweConfig {
    pub fn candidate(&self) -> Scorer {
        Scorer::new(self.candidate_scorer, self.bm25, self.ql)
    }
}

/// A weighted bag of distinct terms: (store row, tf, idf if known).
struct Bag {
    items: Vec<(u32, u32, Option<f64>)>,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn aggregate(bag: &Bag, store: &EmbeddingStore, weighting: Weighting) -> Option<Vec<f64>> {
    let dim = store.dim();
    let mut acc = vec![0.0f64; dim];
    let mut norm = 0.0f64;
    let mut used = false;
    // Dividing every tf by a common factor changes none of the weightings'
    // directions, and makes bags like "a b" and "a a b b" bit-identical.
    let common = bag.items.iter().fold(0, |g, &(_, tf, _)| gcd(g, tf)).max(1);
    // Weights relative to the largest one, so uniform weights are exactly 1
    // and the weighted average does the same arithmetic as the plain mean.
    let g_max = bag
        .items
        .iter()
        .filter_map(|&(_, tf, idf)| idf.map(|idf| (tf / common) as f64 * idf))
        .fold(0.0f64, f64::max);
    for &(row, tf, idf) in &bag.items {
        let tf = tf / common;
        let v = store.row(row);
        let coeff = match weighting {
            Weighting::Mean => {
                norm += tf as f64;
                tf as f64
            }
            Weighting::TfidfWeighted => {
                let Some(idf) = idf else { continue };
                let g = tf as f64 * idf / g_max;
                norm += g;
                g
            }
            Weighting::TfidfDivided => {
                let Some(idf) = idf else { continue };
                1.0 / (tf as f64 * idf)
            }
        };
        used = true;
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += coeff * x as f64;
        }
    }
    if !used {
        return None;
    }
    match weighting {
        Weighting::Mean | Weighting::TfidfWeighted => {
            for a in &mut acc {
                *a /= norm;
            }
        }
        Weighting::TfidfDivided => {
            let len = l2(&acc);
            if len == 0.0 {
                return None;
            }
            for a in &mut acc {
                *a /= len;
            }
        }
    }
    Some(acc)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine of two dense vectors; `None` if either has zero length.
pub fn dense_cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (l2(a), l2(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Aggregated vector of an analyzed text, or `None` when no term contributes.
pub fn text_vector(
    terms: &[String],
    store: &EmbeddingStore,
    index: &Index,
    weighting: Weighting,
) -> Option<Vec<f64>> {
    let mut order: Vec<&str> = Vec::new();
    let mut counts: HashMap<&str, u32> = HashMap::new();
    for t in terms {
        let c = counts.entry(t.as_str()).or_insert(0);
        if *c == 0 {
            order.push(t.as_str());
        }
        *c += 1;
    }
    let items = order
        .into_iter()
        .filter_map(|t| store.ordinal(t).map(|row| (row, counts[t], index.idf(t))))
        .collect();
    aggregate(&Bag { items }, store, weighting)
}

/// Precomputed document vectors for one (index, store, weighting) triple.
pub struct DocVectorTable {
    dim: usize,
    present: Vec<bool>,
    vectors: Vec<f64>,
    index_fp: Fingerprint,
    store_fp: Fingerprint,
    weighting: Weighting,
}

impl DocVectorTable {
    pub fn build(index: &Index, store: &EmbeddingStore, weighting: Weighting) -> DocVectorTable {
        let ctx = DocContext::new(index, store);
        let dim = store.dim();
        let rows: Vec<Option<Vec<f64>>> = (0..index.num_docs())
            .into_par_iter()
            .map(|d| ctx.doc_vector(d, weighting))
            .collect();
        let mut present = Vec::with_capacity(rows.len());
        let mut vectors = vec![0.0; rows.len() * dim];
        for (d, row) in rows.into_iter().enumerate() {
            present.push(row.is_some());
            if let Some(v) = row {
                vectors[d * dim..(d + 1) * dim].copy_from_slice(&v);
            }
        }
        DocVectorTable {
            dim,
            present,
            vectors,
            index_fp: index.content_fingerprint(),
            store_fp: store.fingerprint(),
            weighting,
        }
    }

    pub fn get(&self, doc: u32) -> Option<&[f64]> {
        let d = doc as usize;
        self.present[d].then(|| &self.vectors[d * self.dim..(d + 1) * self.dim])
    }

    pub fn matches(&self, index: &Index, store: &EmbeddingStore, weighting: Weighting) -> bool {
        self.index_fp == index.content_fingerprint()
            && self.store_fp == store.fingerprint()
            && self.weighting == weighting
            && self.present.len() == index.num_docs() as usize
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.index_fp.0);
        out.extend_from_slice(&self.store_fp.0);
        out.push(self.weighting.code());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.present.len() as u64).to_le_bytes());
        out.extend(self.present.iter().map(|&p| p as u8));
        for (d, &p) in self.present.iter().enumerate() {
            if p {
                for x in &self.vectors[d * self.dim..(d + 1) * self.dim] {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        let digest = Fingerprint::of(&out);
        out.extend_from_slice(&digest.0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<DocVectorTable> {
        let bad = |m: &str| Error::Checksum(format!("doc-vector cache: {m}"));
        if bytes.len() < 8 + 4 + 64 + 1 + 16 + 32 {
            return Err(bad("file too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Fingerprint::of(body).0[..] != *digest {
            return Err(bad("digest mismatch"));
        }
        if &body[..8] != CACHE_MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
        if version != CACHE_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CACHE_VERSION,
            });
        }
        let fp = |at: usize| Fingerprint(body[at..at + 32].try_into().expect("32 bytes"));
        let weighting = match body[76] {
            0 => Weighting::Mean,
            1 => Weighting::TfidfWeighted,
            2 => Weighting::TfidfDivided,
            _ => return Err(bad("unknown weighting code")),
        };
        let dim = u64::from_le_bytes(body[77..85].try_into().expect("8 bytes")) as usize;
        let n = u64::from_le_bytes(body[85..93].try_into().expect("8 bytes")) as usize;
        let flags = body.get(93..93 + n).ok_or_else(|| bad("truncated"))?;
        let present: Vec<bool> = flags.iter().map(|&b| b != 0).collect();
        let n_present = present.iter().filter(|&&p| p).count();
        let data = &body[93 + n..];
        if data.len() != n_present * dim * 8 {
            return Err(bad("vector region has the wrong size"));
        }
        let mut values = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut vectors = vec![0.0; n * dim];
        for (d, &p) in present.iter().enumerate() {
            if p {
                for slot in &mut vectors[d * dim..(d + 1) * dim] {
                    *slot = values.next().expect("size checked");
                }
            }
        }
        Ok(DocVectorTable {
            dim,
            present,
            vectors,
            index_fp: fp(12),
            store_fp: fp(44),
            weighting,
        })
    }

    /// Reuses the cache at `path` when its fingerprints match, otherwise
    /// rebuilds it and replaces the file (written to a temporary name first).
    pub fn load_or_build(
        path: &Path,
        index: &Index,
        store: &EmbeddingStore,
        weighting: Weighting,
    ) -> Result<DocVectorTable> {
        if path.exists() {
            match fs::read(path)
                .map_err(|e| Error::io(path, e))
                .and_then(|b| DocVectorTable::from_bytes(&b))
            {
                Ok(table) if table.matches(index, store, weighting) => return Ok(table),
                Ok(_) => log::info!(
                    "{}: cache is for a different index/embeddings/weighting; rebuilding",
                    path.display()
                ),
                Err(e) => log::warn!("{}: unusable cache ({e}); rebuilding", path.display()),
            }
        }
        let table = DocVectorTable::build(index, store, weighting);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, table.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(table)
    }
}

/// Index-to-store term mapping shared by document vector computations.
struct DocContext<'a> {
    index: &'a Index,
    store: &'a EmbeddingStore,
    term_rows: Vec<Option<u32>>,
    idf: Vec<f64>,
}

impl<'a> DocContext<'a> {
    fn new(index: &'a Index, store: &'a EmbeddingStore) -> Self {
        let n = index.num_docs();
        let term_rows = index.terms().iter().map(|t| store.ordinal(t)).collect();
        let idf = (0..index.num_terms() as u32)
            .map(|t| smoothed_idf(n, index.postings_by_ordinal(t).len() as u32))
            .collect();
        DocContext {
            index,
            store,
            term_rows,
            idf,
        }
    }

    fn doc_vector(&self, doc: u32, weighting: Weighting) -> Option<Vec<f64>> {
        let items = self
            .index
            .doc_terms(doc)
            .iter()
            .filter_map(|&(t, tf)| {
                self.term_rows[t as usize].map(|row| (row, tf, Some(self.idf[t as usize])))
            })
            .collect();
        aggregate(&Bag { items }, self.store, weighting)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AweRanking {
    pub ranked: Vec<ScoredDoc>,
    /// True when the query had no vector and the lexical order was returned.
    pub fallback: bool,
}

/// Reusable AWE scorer over one index and store.
pub struct AweRanker<'a> {
    ctx: DocContext<'a>,
    config: AweConfig,
    table: Option<&'a DocVectorTable>,
}

impl<'a> AweRanker<'a> {
    pub fn new(index: &'a Index, store: &'a EmbeddingStore, config: AweConfig) -> Result<Self> {
        config.candidate().validate()?;
        Ok(AweRanker {
            ctx: DocContext::new(index, store),
            config,
            table: None,
        })
    }

    /// Use precomputed document vectors; ignored if they belong to other inputs.
    pub fn with_table(mut self, table: &'a DocVectorTable) -> Self {
        if table.matches(self.ctx.index, self.ctx.store, self.config.weighting) {
            self.table = Some(table);
        } else {
            log::warn!("doc-vector table does not match the index/embeddings; computing vectors on the fly");
        }
        self
    }

    fn doc_vector(&self, doc: u32) -> Option<Cow<'_, [f64]>> {
        match self.table {
            Some(t) => t.get(doc).map(Cow::Borrowed),
            None => self
                .ctx
                .doc_vector(doc, self.config.weighting)
                .map(Cow::Owned),
        }
    }

    /// Lexical ranking of all documents: matching ones by score, the rest
    /// after them by doc id. Truncated to `depth` (0 = everything).
    fn candidates(&self, query: &[String], depth: usize) -> Vec<u32> {
        let index = self.ctx.index;
        let n = index.num_docs() as usize;
        if depth == 0 {
            return (0..n as u32).collect();
        }
        let scored = score_candidates(query, index, &self.config.candidate());
        let mut matching: Vec<(u32, f64)> = scored;
        matching.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| index.doc_id(a.0).cmp(index.doc_id(b.0)))
        });
        let mut out: Vec<u32> = matching.iter().map(|&(d, _)| d).take(depth).collect();
        if out.len() < depth {
            let mut is_match = vec![false; n];
            for &(d, _) in &matching {
                is_match[d as usize] = true;
            }
            let mut rest: Vec<u32> = (0..n as u32).filter(|&d| !is_match[d as usize]).collect();
            rest.sort_by(|&a, &b| index.doc_id(a).cmp(index.doc_id(b)));
            out.extend(rest.into_iter().take(depth - out.len()));
        }
        out
    }

    pub fn rank(&self, query: &[String]) -> AweRanking {
        let index = self.ctx.index;
        let Some(qv) = text_vector(query, self.ctx.store, index, self.config.weighting)
            .filter(|v| l2(v) > 0.0)
        else {
            let lexical = score_candidates(query, index, &self.config.candidate());
            let mut ranked = rank(index, lexical, usize::MAX);
            if self.config.rerank_depth > 0 {
                ranked.truncate(self.config.rerank_depth);
            }
            return AweRanking {
                ranked,
                fallback: true,
            };
        };
        let docs = self.candidates(query, self.config.rerank_depth);
        let scored: Vec<(u32, f64)> = docs
            .par_iter()
            .map(|&d| {
                let s = self
                    .doc_vector(d)
                    .and_then(|dv| dense_cosine(&qv, &dv))
                    .unwrap_or(ABSENT_SCORE);
                (d, s)
            })
            .collect();
        AweRanking {
            ranked: rank(index, scored, usize::MAX),
            fallback: false,
        }
    }
}

pub fn score_awe(
    query: &[String],
    index: &Index,
    store: &EmbeddingStore,
    config: &AweConfig,
) -> Result<AweRanking> {
    Ok(AweRanker::new(index, store, *config)?.rank(query))
}

pub fn run_awe_pipeline(
    topics: &[Topic],
    index: &Index,
    store: &EmbeddingStore,
    analyzer: &Analyzer,
    config: &AweConfig,
    table: Option<&DocVectorTable>,
    options: &RunOptions,
) -> Result<RunOutcome> {
    let mut ranker = AweRanker::new(index, store, *config)?;
    if let Some(t) = table {
        ranker = ranker.with_table(t);
    }
    run_topics(topics, index, analyzer, options, |_, terms| {
        let r = ranker.rank(&terms);
        Ok(TopicResult {
            ranked: r.ranked,
            note: r
                .fallback
                .then(|| "no query vector; lexical candidate order used".to_string()),
        })
    })
}
