//! Pretrained word vectors with exact cosine k-NN.
//!
//! Vectors are held as `f32` (raw and row-normalized copies); similarity is
//! accumulated in `f64`. Out-of-vocabulary lookups are ordinary absent values,
//! not errors, since every downstream pipeline simply skips such words.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{Fingerprint, FingerprintBuilder};

/// Vocabularies above this size are scanned in parallel.
const PARALLEL_SCAN_MIN: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingFormat {
    #[default]
    GloveText,
    Word2vecText,
}

impl FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glove" | "glove_text" => Ok(EmbeddingFormat::GloveText),
            "word2vec" | "word2vec_text" => Ok(EmbeddingFormat::Word2vecText),
            other => Err(Error::Config(format!(
                "unknown embedding format `{other}` (expected glove_text|word2vec_text)"
            ))),
        }
    }
}

impl fmt::Display for EmbeddingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingFormat::GloveText => "glove_text",
            EmbeddingFormat::Word2vecText => "word2vec_text",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rows: usize,
    /// Rows with the wrong arity or a non-numeric / non-finite component.
    pub skipped_rows: usize,
    pub duplicate_words: usize,
    /// `(declared, loaded)` when a word2vec header disagrees with the file.
    pub header_mismatch: Option<(usize, usize)>,
    pub zero_rows: usize,
}

/// Result of comparing two words.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Similarity {
    Value(f64),
    OutOfVocabulary,
    /// At least one of the words has an all-zero vector.
    Undefined,
}

impl Similarity {
    pub fn value(self) -> Option<f64> {
        match self {
            Similarity::Value(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub word: String,
    pub cosine: f64,
}

pub struct EmbeddingStore {
    words: Vec<String>,
    lookup: HashMap<String, u32>,
    dim: usize,
    matrix: Vec<f32>,
    unit: Vec<f32>,
    zero: Vec<bool>,
    fingerprint: Fingerprint,
}

impl fmt::Debug for EmbeddingStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmbeddingStore")
            .field("words", &self.words.len())
            .field("dim", &self.dim)
            .field("fingerprint", &self.fingerprint)
            .finish()
    }
}

fn parse_row(line: &str, dim: Option<usize>) -> Option<(String, Vec<f32>)> {
    let mut parts = line.split_whitespace();
    let word = parts.next()?.to_owned();
    let values: Vec<f32> = parts
        .map(|p| p.parse::<f32>().ok().filter(|v| v.is_finite()))
        .collect::<Option<_>>()?;
    if values.is_empty() || dim.is_some_and(|d| d != values.len()) {
        return None;
    }
    Some((word, values))
}

impl EmbeddingStore {
    /// Builds a store from in-memory rows; the first row fixes the dimension.
    pub fn from_rows<I>(rows: I) -> Result<EmbeddingStore>
    where
        I: IntoIterator<Item = (String, Vec<f32>)>,
    {
        let mut builder = StoreBuilder::default();
        for (word, v) in rows {
            if !builder.push(word.clone(), &v) {
                return Err(Error::InvalidParam(format!(
                    "row for `{word}` is empty, non-finite or has the wrong dimension"
                )));
            }
        }
        let (store, _) = builder.finish()?;
        Ok(store)
    }

    pub fn load(path: &Path, format: EmbeddingFormat) -> Result<(EmbeddingStore, LoadReport)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader: Box<dyn BufRead> = if path.extension().is_some_and(|e| e == "gz") {
            Box::new(std::io::BufReader::new(flate2::read::GzDecoder::new(file)))
        } else {
            Box::new(std::io::BufReader::with_capacity(1 << 20, file))
        };
        Self::from_reader(reader, format, path)
    }

    /// `origin` is only used in error messages.
    pub fn from_reader<R: BufRead>(
        reader: R,
        format: EmbeddingFormat,
        origin: &Path,
    ) -> Result<(EmbeddingStore, LoadReport)> {
        let mut builder = StoreBuilder::default();
        let mut declared: Option<usize> = None;
        let mut first = true;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            if first {
                first = false;
                if format == EmbeddingFormat::Word2vecText {
                    let header: Vec<usize> = line
                        .split_whitespace()
                        .filter_map(|t| t.parse().ok())
                        .collect();
                    match header.as_slice() {
                        [n, d] if *d > 0 && line.split_whitespace().count() == 2 => {
                            declared = Some(*n);
                            builder.dim = Some(*d);
                            continue;
                        }
                        _ => {
                            return Err(Error::parse(
                                origin,
                                i + 1,
                                "word2vec header must be `vocab_size dim`",
                            ))
                        }
                    }
                }
            }
            match parse_row(&line, builder.dim) {
                Some((word, values)) => {
                    builder.push(word, &values);
                }
                None => builder.report.skipped_rows += 1,
            }
        }
        if builder.words.is_empty() && builder.report.skipped_rows == 0 && declared.is_none() {
            return Err(Error::Empty(format!(
                "{}: no embedding rows",
                origin.display()
            )));
        }
        if let Some(n) = declared {
            if n != builder.words.len()
                + builder.report.duplicate_words
                + builder.report.skipped_rows
            {
                log::warn!(
                    "{}: header declares {n} rows but {} were read",
                    origin.display(),
                    builder.words.len()
                        + builder.report.duplicate_words
                        + builder.report.skipped_rows
                );
                builder.report.header_mismatch = Some((n, builder.words.len()));
            }
        }
        if builder.report.skipped_rows > 0 {
            log::warn!(
                "{}: skipped {} malformed rows",
                origin.display(),
                builder.report.skipped_rows
            );
        }
        if builder.report.duplicate_words > 0 {
            log::warn!(
                "{}: ignored {} duplicate words",
                origin.display(),
                builder.report.duplicate_words
            );
        }
        if builder.words.is_empty() {
            return Err(Error::Empty(format!(
                "{}: no valid embedding rows",
                origin.display()
            )));
        }
        builder.finish()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn ordinal(&self, word: &str) -> Option<u32> {
        self.lookup.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.lookup.contains_key(word)
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.ordinal(word).map(|o| self.row(o))
    }

    pub fn row(&self, ordinal: u32) -> &[f32] {
        let start = ordinal as usize * self.dim;
        &self.matrix[start..start + self.dim]
    }

    pub fn unit_row(&self, ordinal: u32) -> &[f32] {
        let start = ordinal as usize * self.dim;
        &self.unit[start..start + self.dim]
    }

    pub fn is_zero(&self, ordinal: u32) -> bool {
        self.zero[ordinal as usize]
    }

    fn unit_dot(&self, a: u32, b: u32) -> f64 {
        let dot: f64 = self
            .unit_row(a)
            .iter()
            .zip(self.unit_row(b))
            .map(|(&x, &y)| x as f64 * y as f64)
            .sum();
        dot.clamp(-1.0, 1.0)
    }

    pub fn cosine(&self, a: &str, b: &str) -> Similarity {
        match (self.ordinal(a), self.ordinal(b)) {
            (Some(x), Some(y)) if self.is_zero(x) || self.is_zero(y) => Similarity::Undefined,
            (Some(x), Some(y)) => Similarity::Value(self.unit_dot(x, y)),
            _ => Similarity::OutOfVocabulary,
        }
    }

    /// Up to `k` words with cosine strictly above `min_cos`, best first; ties
    /// go to the earlier vocabulary entry. `None` when `query` is not in the
    /// vocabulary; an empty list when it has a zero vector.
    pub fn nearest_neighbors(&self, query: &str, k: usize, min_cos: f64) -> Option<Vec<Neighbor>> {
        let q = self.ordinal(query)?;
        if k == 0 || self.is_zero(q) {
            return Some(Vec::new());
        }
        let consider = |top: &mut TopK, o: u32| {
            if o != q && !self.zero[o as usize] {
                let cos = self.unit_dot(q, o);
                if cos > min_cos {
                    top.offer(Candidate { cos, ordinal: o });
                }
            }
        };
        let n = self.words.len() as u32;
        let top = if self.words.len() >= PARALLEL_SCAN_MIN {
            (0..n)
                .into_par_iter()
                .fold(
                    || TopK::new(k),
                    |mut top, o| {
                        consider(&mut top, o);
                        top
                    },
                )
                .reduce(|| TopK::new(k), TopK::merge)
        } else {
            let mut top = TopK::new(k);
            (0..n).for_each(|o| consider(&mut top, o));
            top
        };
        Some(
            top.into_sorted()
                .into_iter()
                .map(|c| Neighbor {
                    word: self.words[c.ordinal as usize].clone(),
                    cosine: c.cos,
                })
                .collect(),
        )
    }

    /// A copy keeping only the words accepted by `keep`, in original order.
    pub fn restrict_to(&self, keep: impl Fn(&str) -> bool) -> EmbeddingStore {
        let mut builder = StoreBuilder {
            dim: Some(self.dim),
            ..StoreBuilder::default()
        };
        for (o, w) in self.words.iter().enumerate() {
            if keep(w) {
                builder.push(w.clone(), self.row(o as u32));
            }
        }
        let mut store = builder.finish_unchecked();
        if store.words.is_empty() {
            store.dim = self.dim;
        }
        store
    }
}

#[derive(Default)]
struct StoreBuilder {
    words: Vec<String>,
    lookup: HashMap<String, u32>,
    dim: Option<usize>,
    matrix: Vec<f32>,
    report: LoadReport,
}

impl StoreBuilder {
    /// Returns false if the row was rejected (bad dimension or values).
    fn push(&mut self, word: String, values: &[f32]) -> bool {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            self.report.skipped_rows += 1;
            return false;
        }
        match self.dim {
            Some(d) if d != values.len() => {
                self.report.skipped_rows += 1;
                return false;
            }
            None => self.dim = Some(values.len()),
            _ => {}
        }
        if self.lookup.contains_key(&word) {
            self.report.duplicate_words += 1;
            return true;
        }
        self.lookup.insert(word.clone(), self.words.len() as u32);
        self.words.push(word);
        self.matrix.extend_from_slice(values);
        true
    }

    fn finish(self) -> Result<(EmbeddingStore, LoadReport)> {
        if self.words.is_empty() {
            return Err(Error::Empty("embedding store has no rows".into()));
        }
        let mut report = self.report.clone();
        let store = self.finish_unchecked();
        report.rows = store.words.len();
        report.zero_rows = store.zero.iter().filter(|&&z| z).count();
        Ok((store, report))
    }

    fn finish_unchecked(self) -> EmbeddingStore {
        let dim = self.dim.unwrap_or(1);
        let mut unit = Vec::with_capacity(self.matrix.len());
        let mut zero = Vec::with_capacity(self.words.len());
        for row in self.matrix.chunks(dim) {
            let norm = row.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
            zero.push(norm == 0.0);
            if norm == 0.0 {
                unit.extend(std::iter::repeat_n(0.0f32, dim));
            } else {
                unit.extend(row.iter().map(|&x| (x as f64 / norm) as f32));
            }
        }
        let mut fp = FingerprintBuilder::default();
        fp.update(&(dim as u64).to_le_bytes());
        for (word, row) in self.words.iter().zip(self.matrix.chunks(dim)) {
            fp.update(&(word.len() as u64).to_le_bytes())
                .update(word.as_bytes());
            for x in row {
                fp.update(&x.to_bits().to_le_bytes());
            }
        }
        EmbeddingStore {
            words: self.words,
            lookup: self.lookup,
            dim,
            matrix: self.matrix,
            unit,
            zero,
            fingerprint: fp.finish(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cos: f64,
    ordinal: u32,
}

// Greater = better: higher cosine, then lower vocabulary ordinal.
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cos
            .total_cmp(&other.cos)
            .then_with(|| other.ordinal.cmp(&self.ordinal))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

struct TopK {
    k: usize,
    heap: BinaryHeap<Reverse<Candidate>>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k.min(1024) + 1),
        }
    }

    fn offer(&mut self, c: Candidate) {
        if self.heap.len() < self.k {
            self.heap.push(Reverse(c));
        } else if let Some(Reverse(worst)) = self.heap.peek() {
            if c > *worst {
                self.heap.pop();
                self.heap.push(Reverse(c));
            }
        }
    }

    fn merge(mut self, other: TopK) -> TopK {
        for Reverse(c) in other.heap {
            self.offer(c);
        }
        self
    }

    fn into_sorted(self) -> Vec<Candidate> {
        let mut v: Vec<Candidate> = self.heap.into_iter().map(|Reverse(c)| c).collect();
        v.sort_by(|a, b| b.cmp(a));
        v
    }
}
