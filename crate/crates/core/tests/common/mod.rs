#![allow(dead_code)]

use std::collections::HashMap;

use embir_core::{build_index, AnalyzerConfig, EmbeddingStore, Index, RawDocument, SourceFormat};
use proptest::prelude::*;

pub fn word(i: usize) -> String {
    format!("w{i}")
}

pub fn doc_id(i: usize) -> String {
    format!("d{i:03}")
}

/// Documents as lists of vocabulary indices.
pub fn corpus(
    max_docs: usize,
    vocab: usize,
    max_len: usize,
) -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0..vocab, 0..=max_len), 1..=max_docs)
}

pub fn raw_docs(docs: &[Vec<usize>]) -> Vec<RawDocument> {
    docs.iter()
        .enumerate()
        .map(|(i, d)| RawDocument {
            doc_id: doc_id(i),
            title: String::new(),
            body: d.iter().map(|&w| word(w)).collect::<Vec<_>>().join(" "),
            source_format: SourceFormat::Jsonl,
        })
        .collect()
}

pub fn index_of(docs: &[Vec<usize>]) -> Index {
    build_index(
        raw_docs(docs).into_iter().map(Ok),
        &AnalyzerConfig::default(),
    )
    .unwrap()
}

pub fn store_of(rows: &[Vec<f32>]) -> EmbeddingStore {
    EmbeddingStore::from_rows(rows.iter().enumerate().map(|(i, v)| (word(i), v.clone()))).unwrap()
}

/// Direct per-document evaluation of the lexical scoring formulas.
pub struct LexicalOracle {
    docs: Vec<Vec<String>>,
}

impl LexicalOracle {
    pub fn new(docs: &[Vec<usize>]) -> Self {
        LexicalOracle {
            docs: docs
                .iter()
                .map(|d| d.iter().map(|&w| word(w)).collect())
                .collect(),
        }
    }

    fn tf(&self, d: usize, t: &str) -> usize {
        self.docs[d].iter().filter(|w| *w == t).count()
    }

    fn distinct(query: &[String]) -> Vec<String> {
        let mut q = query.to_vec();
        q.sort();
        q.dedup();
        q
    }

    fn rank(mut scored: Vec<(String, f64)>) -> Vec<(String, f64)> {
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        scored
    }

    pub fn bm25(&self, query: &[String], k1: f64, b: f64) -> Vec<(String, f64)> {
        let q = Self::distinct(query);
        let n = self.docs.len() as f64;
        let avgdl = self.docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
        let df: HashMap<&str, f64> = q
            .iter()
            .map(|t| {
                (
                    t.as_str(),
                    (0..self.docs.len()).filter(|&d| self.tf(d, t) > 0).count() as f64,
                )
            })
            .collect();
        let mut out = Vec::new();
        for d in 0..self.docs.len() {
            if !q.iter().any(|t| self.tf(d, t) > 0) {
                continue;
            }
            let len = self.docs[d].len() as f64;
            let mut s = 0.0;
            for t in &q {
                let tf = self.tf(d, t) as f64;
                if tf == 0.0 {
                    continue;
                }
                let idf = (1.0 + (n - df[t.as_str()] + 0.5) / (df[t.as_str()] + 0.5)).ln();
                s += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len / avgdl));
            }
            out.push((doc_id(d), s));
        }
        Self::rank(out)
    }

    pub fn ql(&self, query: &[String], mu: f64) -> Vec<(String, f64)> {
        let q = Self::distinct(query);
        let total: f64 = self.docs.iter().map(Vec::len).sum::<usize>() as f64;
        let cf = |t: &str| (0..self.docs.len()).map(|d| self.tf(d, t)).sum::<usize>() as f64;
        let mut out = Vec::new();
        for d in 0..self.docs.len() {
            if !q.iter().any(|t| self.tf(d, t) > 0) {
                continue;
            }
            let len = self.docs[d].len() as f64;
            let mut s = 0.0;
            for t in &q {
                let c = cf(t);
                if c == 0.0 {
                    continue;
                }
                s += ((self.tf(d, t) as f64 + mu * c / total) / (len + mu)).ln();
            }
            out.push((doc_id(d), s));
        }
        Self::rank(out)
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}
