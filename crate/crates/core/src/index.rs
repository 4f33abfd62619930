//! In-memory inverted index with a single-file on-disk representation.
//!
//! File layout (all integers little-endian, `v` = LEB128 varint):
//!
//! ```text
//! magic "EMBIRIDX" | version u32 | payload_len u64 | payload | sha256(payload)
//!
//! payload:
//!   analyzer:  lowercase u8, stemmer u8, v #stopwords, (v len, bytes)*
//!   analyzer fingerprint [32]
//!   docs:      v num_docs, (v len, id bytes, v doc_len)*
//!   terms:     v num_terms, (v len, term bytes, v df, v cf, v offset, v byte_len)*   sorted by term
//!   postings:  v region_len, region bytes: per term (v doc_delta, v tf)*
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::analysis::{Analyzer, AnalyzerConfig, Stemmer};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::ingest::RawDocument;

pub const INDEX_MAGIC: &[u8; 8] = b"EMBIRIDX";
pub const INDEX_VERSION: u32 = 1;

const BUILD_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexStats {
    pub num_docs: u32,
    pub total_tokens: u64,
    /// Zero for an empty index.
    pub avg_doc_len: f64,
}

/// idf used for TF-IDF weighting: `ln((N + 1) / (df + 1)) + 1`, always > 0.
pub fn smoothed_idf(num_docs: u32, df: u32) -> f64 {
    ((num_docs as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
}

pub struct Index {
    analyzer: AnalyzerConfig,
    analyzer_fp: Fingerprint,
    doc_ids: Vec<String>,
    doc_lens: Vec<u32>,
    doc_lookup: HashMap<String, u32>,
    terms: Vec<String>,
    term_lookup: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    cfs: Vec<u64>,
    total_tokens: u64,
    forward: OnceLock<Vec<Vec<(u32, u32)>>>,
    content_fp: OnceLock<Fingerprint>,
}

impl std::fmt::Debug for Index {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Index")
            .field("num_docs", &self.doc_ids.len())
            .field("num_terms", &self.terms.len())
            .field("total_tokens", &self.total_tokens)
            .field("analyzer", &self.analyzer_fp)
            .finish()
    }
}

impl PartialEq for Index {
    fn eq(&self, other: &Self) -> bool {
        self.analyzer_fp == other.analyzer_fp
            && self.doc_ids == other.doc_ids
            && self.doc_lens == other.doc_lens
            && self.terms == other.terms
            && self.postings == other.postings
            && self.cfs == other.cfs
            && self.total_tokens == other.total_tokens
    }
}

/// Accumulates documents one at a time.
pub struct IndexBuilder {
    analyzer: Analyzer,
    doc_ids: Vec<String>,
    doc_lens: Vec<u32>,
    doc_lookup: HashMap<String, u32>,
    postings: HashMap<String, Vec<Posting>>,
}

impl IndexBuilder {
    pub fn new(config: AnalyzerConfig) -> Self {
        IndexBuilder {
            analyzer: Analyzer::new(config),
            doc_ids: Vec::new(),
            doc_lens: Vec::new(),
            doc_lookup: HashMap::new(),
            postings: HashMap::new(),
        }
    }

    pub fn add(&mut self, doc: &RawDocument) -> Result<()> {
        let terms = self.analyzer.analyze(&doc.text());
        self.add_analyzed(&doc.doc_id, &terms)
    }

    /// Adds a document whose text has already been run through this builder's analyzer.
    pub fn add_analyzed(&mut self, doc_id: &str, terms: &[String]) -> Result<()> {
        let mut counts: HashMap<&str, u32> = HashMap::new();
        for t in terms {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        self.add_counts(
            doc_id,
            terms.len() as u32,
            counts.into_iter().map(|(t, c)| (t.to_owned(), c)),
        )
    }

    fn add_counts(
        &mut self,
        doc_id: &str,
        len: u32,
        counts: impl IntoIterator<Item = (String, u32)>,
    ) -> Result<()> {
        if self.doc_lookup.contains_key(doc_id) {
            return Err(Error::DuplicateDocId(doc_id.to_owned()));
        }
        let ordinal = u32::try_from(self.doc_ids.len())
            .map_err(|_| Error::Data("too many documents".into()))?;
        self.doc_lookup.insert(doc_id.to_owned(), ordinal);
        self.doc_ids.push(doc_id.to_owned());
        self.doc_lens.push(len);
        for (term, tf) in counts {
            self.postings
                .entry(term)
                .or_default()
                .push(Posting { doc: ordinal, tf });
        }
        Ok(())
    }

    pub fn finish(self) -> Index {
        let by_term: BTreeMap<String, Vec<Posting>> = self.postings.into_iter().collect();
        let mut terms = Vec::with_capacity(by_term.len());
        let mut postings = Vec::with_capacity(by_term.len());
        for (term, list) in by_term {
            terms.push(term);
            postings.push(list);
        }
        Index::assemble(
            self.analyzer.config().clone(),
            self.doc_ids,
            self.doc_lens,
            terms,
            postings,
        )
    }
}

/// Builds an index from a document stream. Documents are analyzed in parallel
/// chunks; postings are appended in stream order so the result is deterministic.
pub fn build_index<I>(docs: I, config: &AnalyzerConfig) -> Result<Index>
where
    I: IntoIterator<Item = Result<RawDocument>>,
{
    let mut builder = IndexBuilder::new(config.clone());
    let mut docs = docs.into_iter();
    loop {
        let chunk: Vec<RawDocument> = docs.by_ref().take(BUILD_CHUNK).collect::<Result<_>>()?;
        if chunk.is_empty() {
            break;
        }
        let analyzer = &builder.analyzer;
        let analyzed: Vec<(u32, Vec<(String, u32)>)> = chunk
            .par_iter()
            .map(|doc| {
                let terms = analyzer.analyze(&doc.text());
                let mut counts: HashMap<String, u32> = HashMap::new();
                for t in &terms {
                    *counts.entry(t.clone()).or_default() += 1;
                }
                (terms.len() as u32, counts.into_iter().collect())
            })
            .collect();
        for (doc, (len, counts)) in chunk.iter().zip(analyzed) {
            builder.add_counts(&doc.doc_id, len, counts)?;
        }
    }
    Ok(builder.finish())
}

impl Index {
    fn assemble(
        analyzer: AnalyzerConfig,
        doc_ids: Vec<String>,
        doc_lens: Vec<u32>,
        terms: Vec<String>,
        postings: Vec<Vec<Posting>>,
    ) -> Index {
        let cfs: Vec<u64> = postings
            .iter()
            .map(|p| p.iter().map(|x| x.tf as u64).sum())
            .collect();
        let total_tokens = doc_lens.iter().map(|&l| l as u64).sum();
        let doc_lookup = doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), i as u32))
            .collect();
        let term_lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Index {
            analyzer_fp: analyzer.fingerprint(),
            analyzer,
            doc_ids,
            doc_lens,
            doc_lookup,
            terms,
            term_lookup,
            postings,
            cfs,
            total_tokens,
            forward: OnceLock::new(),
            content_fp: OnceLock::new(),
        }
    }

    pub fn analyzer_config(&self) -> &AnalyzerConfig {
        &self.analyzer
    }

    pub fn analyzer_fingerprint(&self) -> Fingerprint {
        self.analyzer_fp
    }

    /// Refuses configs that differ from the one the index was built with.
    pub fn check_analyzer(&self, config: &AnalyzerConfig) -> Result<()> {
        let fp = config.fingerprint();
        if fp != self.analyzer_fp {
            return Err(Error::FingerprintMismatch {
                index: self.analyzer_fp.short(),
                query: fp.short(),
            });
        }
        Ok(())
    }

    /// Analyzes query text, checking that `analyzer` matches the index.
    pub fn analyze_query(&self, text: &str, analyzer: &Analyzer) -> Result<Vec<String>> {
        self.check_analyzer(analyzer.config())?;
        Ok(analyzer.analyze(text))
    }

    pub fn num_docs(&self) -> u32 {
        self.doc_ids.len() as u32
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn stats(&self) -> IndexStats {
        let n = self.num_docs();
        IndexStats {
            num_docs: n,
            total_tokens: self.total_tokens,
            avg_doc_len: if n == 0 {
                0.0
            } else {
                self.total_tokens as f64 / n as f64
            },
        }
    }

    pub fn doc_id(&self, ordinal: u32) -> &str {
        &self.doc_ids[ordinal as usize]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_ordinal(&self, doc_id: &str) -> Option<u32> {
        self.doc_lookup.get(doc_id).copied()
    }

    pub fn doc_len(&self, ordinal: u32) -> u32 {
        self.doc_lens[ordinal as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term_ordinal(&self, term: &str) -> Option<u32> {
        self.term_lookup.get(term).copied()
    }

    pub fn contains_term(&self, term: &str) -> bool {
        self.term_lookup.contains_key(term)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.term_ordinal(term)
            .map_or(&[], |t| &self.postings[t as usize])
    }

    pub fn postings_by_ordinal(&self, term: u32) -> &[Posting] {
        &self.postings[term as usize]
    }

    pub fn df(&self, term: &str) -> u32 {
        self.postings(term).len() as u32
    }

    pub fn cf(&self, term: &str) -> u64 {
        self.term_ordinal(term).map_or(0, |t| self.cfs[t as usize])
    }

    pub fn tf(&self, term: &str, doc: u32) -> u32 {
        let list = self.postings(term);
        list.binary_search_by_key(&doc, |p| p.doc)
            .map_or(0, |i| list[i].tf)
    }

    /// `None` for terms the index has never seen.
    pub fn idf(&self, term: &str) -> Option<f64> {
        let df = self.df(term);
        (df > 0).then(|| smoothed_idf(self.num_docs(), df))
    }

    pub fn tfidf_weight(&self, term: &str, doc: u32) -> Result<f64> {
        let tf = self.tf(term, doc);
        if tf == 0 {
            return Err(Error::TermNotInDocument {
                term: term.to_owned(),
                doc,
            });
        }
        Ok(tf as f64 * smoothed_idf(self.num_docs(), self.df(term)))
    }

    /// Per-document (term ordinal, tf) lists, sorted by term ordinal.
    /// Built on first use by inverting the postings.
    pub fn doc_terms(&self, doc: u32) -> &[(u32, u32)] {
        let forward = self.forward.get_or_init(|| {
            let mut fwd: Vec<Vec<(u32, u32)>> = vec![Vec::new(); self.doc_ids.len()];
            for (t, list) in self.postings.iter().enumerate() {
                for p in list {
                    fwd[p.doc as usize].push((t as u32, p.tf));
                }
            }
            fwd
        });
        &forward[doc as usize]
    }

    /// Hash of the serialized index content.
    pub fn content_fingerprint(&self) -> Fingerprint {
        *self
            .content_fp
            .get_or_init(|| Fingerprint::of(&self.encode_payload()))
    }

    /// Concatenates two shards: `other`'s documents follow `self`'s.
    pub fn merge(&self, other: &Index) -> Result<Index> {
        if self.analyzer_fp != other.analyzer_fp {
            return Err(Error::FingerprintMismatch {
                index: self.analyzer_fp.short(),
                query: other.analyzer_fp.short(),
            });
        }
        if let Some(dup) = other
            .doc_ids
            .iter()
            .find(|d| self.doc_lookup.contains_key(*d))
        {
            return Err(Error::DuplicateDocId(dup.clone()));
        }
        let offset = self.num_docs();
        let mut merged: BTreeMap<&str, Vec<Posting>> = BTreeMap::new();
        for (t, list) in self.terms.iter().zip(&self.postings) {
            merged.insert(t, list.clone());
        }
        for (t, list) in other.terms.iter().zip(&other.postings) {
            merged
                .entry(t)
                .or_default()
                .extend(list.iter().map(|p| Posting {
                    doc: p.doc + offset,
                    tf: p.tf,
                }));
        }
        let (terms, postings) = merged.into_iter().map(|(t, p)| (t.to_owned(), p)).unzip();
        let doc_ids = self.doc_ids.iter().chain(&other.doc_ids).cloned().collect();
        let doc_lens = self
            .doc_lens
            .iter()
            .chain(&other.doc_lens)
            .copied()
            .collect();
        Ok(Index::assemble(
            self.analyzer.clone(),
            doc_ids,
            doc_lens,
            terms,
            postings,
        ))
    }

    fn encode_payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(self.analyzer.lowercase as u8);
        out.push(match self.analyzer.stemmer {
            Stemmer::None => 0,
            Stemmer::Porter => 1,
        });
        put_varint(&mut out, self.analyzer.stopwords.len() as u64);
        for w in &self.analyzer.stopwords {
            put_str(&mut out, w);
        }
        out.extend_from_slice(&self.analyzer_fp.0);

        put_varint(&mut out, self.doc_ids.len() as u64);
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lens) {
            put_str(&mut out, id);
            put_varint(&mut out, *len as u64);
        }

        let mut region = Vec::new();
        let mut table = Vec::new();
        put_varint(&mut table, self.terms.len() as u64);
        for (t, term) in self.terms.iter().enumerate() {
            let start = region.len();
            let mut prev = 0u32;
            for p in &self.postings[t] {
                put_varint(&mut region, (p.doc - prev) as u64);
                put_varint(&mut region, p.tf as u64);
                prev = p.doc;
            }
            put_str(&mut table, term);
            put_varint(&mut table, self.postings[t].len() as u64);
            put_varint(&mut table, self.cfs[t]);
            put_varint(&mut table, start as u64);
            put_varint(&mut table, (region.len() - start) as u64);
        }
        out.extend_from_slice(&table);
        put_varint(&mut out, region.len() as u64);
        out.extend_from_slice(&region);
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.encode_payload();
        let mut out = Vec::with_capacity(payload.len() + 52);
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Fingerprint::of(&payload).0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Index> {
        const HEADER: usize = 8 + 4 + 8;
        if bytes.len() < HEADER + 32 {
            return Err(Error::Checksum(format!(
                "file too short ({} bytes)",
                bytes.len()
            )));
        }
        if &bytes[..8] != INDEX_MAGIC {
            return Err(Error::Checksum("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != INDEX_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: INDEX_VERSION,
            });
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        if bytes.len() != HEADER + len + 32 {
            return Err(Error::Checksum(format!(
                "truncated: payload declares {len} bytes, file holds {}",
                bytes.len().saturating_sub(HEADER + 32)
            )));
        }
        let payload = &bytes[HEADER..HEADER + len];
        if Fingerprint::of(payload).0[..] != bytes[HEADER + len..] {
            return Err(Error::Checksum("payload digest mismatch".into()));
        }
        let index = decode_payload(payload)
            .map_err(|m| Error::Checksum(format!("corrupt payload: {m}")))?;
        let _ = index.content_fp.set(Fingerprint::of(payload));
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Index> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Index::from_bytes(&bytes)
    }
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_varint(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn byte(&mut self) -> Result<u8, String> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or("unexpected end of payload")?;
        self.pos += 1;
        Ok(b)
    }

    fn varint(&mut self) -> Result<u64, String> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.byte()?;
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err("varint overflow".into())
    }

    fn u32(&mut self) -> Result<u32, String> {
        u32::try_from(self.varint()?).map_err(|_| "value exceeds u32".to_string())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or("unexpected end of payload")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn string(&mut self) -> Result<String, String> {
        let n = self.varint()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| "invalid UTF-8 string".to_string())
    }
}

fn decode_payload(payload: &[u8]) -> Result<Index, String> {
    let mut c = Cursor {
        bytes: payload,
        pos: 0,
    };
    let lowercase = c.byte()? != 0;
    let stemmer = match c.byte()? {
        0 => Stemmer::None,
        1 => Stemmer::Porter,
        other => return Err(format!("unknown stemmer code {other}")),
    };
    let n_stop = c.varint()?;
    let mut stopwords = std::collections::BTreeSet::new();
    for _ in 0..n_stop {
        stopwords.insert(c.string()?);
    }
    let analyzer = AnalyzerConfig {
        lowercase,
        stopwords,
        stemmer,
    };
    let stored_fp = c.take(32)?;
    if analyzer.fingerprint().0[..] != *stored_fp {
        return Err("stored analyzer fingerprint does not match analyzer settings".into());
    }

    let n_docs = c.varint()? as usize;
    let mut doc_ids = Vec::with_capacity(n_docs.min(1 << 20));
    let mut doc_lens = Vec::with_capacity(n_docs.min(1 << 20));
    for _ in 0..n_docs {
        doc_ids.push(c.string()?);
        doc_lens.push(c.u32()?);
    }

    let n_terms = c.varint()? as usize;
    let mut terms = Vec::with_capacity(n_terms.min(1 << 20));
    let mut meta = Vec::with_capacity(n_terms.min(1 << 20));
    for _ in 0..n_terms {
        terms.push(c.string()?);
        let df = c.u32()?;
        let cf = c.varint()?;
        let off = c.varint()? as usize;
        let len = c.varint()? as usize;
        meta.push((df, cf, off, len));
    }
    let region_len = c.varint()? as usize;
    let region = c.take(region_len)?;
    if c.pos != payload.len() {
        return Err("trailing bytes after postings region".into());
    }

    let mut postings = Vec::with_capacity(n_terms);
    for (t, &(df, cf, off, len)) in meta.iter().enumerate() {
        let slice = region
            .get(off..off + len)
            .ok_or("postings offset out of range")?;
        let mut pc = Cursor {
            bytes: slice,
            pos: 0,
        };
        let mut list = Vec::with_capacity(df as usize);
        let mut doc = 0u32;
        let mut sum = 0u64;
        for i in 0..df {
            let delta = pc.u32()?;
            if i > 0 && delta == 0 {
                return Err(format!("postings of `{}` not strictly ascending", terms[t]));
            }
            doc = doc.checked_add(delta).ok_or("doc ordinal overflow")?;
            let tf = pc.u32()?;
            if tf == 0 || doc as usize >= n_docs {
                return Err(format!("invalid posting for `{}`", terms[t]));
            }
            sum += tf as u64;
            list.push(Posting { doc, tf });
        }
        if sum != cf {
            return Err(format!("collection frequency mismatch for `{}`", terms[t]));
        }
        postings.push(list);
    }
    Ok(Index::assemble(
        analyzer, doc_ids, doc_lens, terms, postings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SourceFormat;

    pub(crate) fn doc(id: &str, text: &str) -> RawDocument {
        RawDocument {
            doc_id: id.into(),
            title: String::new(),
            body: text.into(),
            source_format: SourceFormat::Jsonl,
        }
    }

    fn build(docs: &[(&str, &str)]) -> Index {
        build_index(
            docs.iter().map(|(i, t)| Ok(doc(i, t))),
            &AnalyzerConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn two_doc_statistics() {
        let ix = build(&[("d1", "a b a"), ("d2", "b c")]);
        assert_eq!(ix.df("a"), 1);
        assert_eq!(ix.df("b"), 2);
        assert_eq!(ix.df("c"), 1);
        assert_eq!(ix.tf("a", 0), 2);
        assert_eq!(ix.cf("b"), 2);
        let stats = ix.stats();
        assert_eq!(stats.num_docs, 2);
        assert_eq!(stats.total_tokens, 5);
        assert_eq!(stats.avg_doc_len, 2.5);
        assert_eq!(ix.doc_terms(0), &[(0, 2), (1, 1)]);
    }

    #[test]
    fn empty_and_single() {
        let ix = build(&[]);
        assert_eq!(ix.num_docs(), 0);
        assert_eq!(ix.num_terms(), 0);
        assert_eq!(ix.stats().avg_doc_len, 0.0);

        let ix = build(&[("only", "x")]);
        assert_eq!((ix.df("x"), ix.cf("x")), (1, 1));
        assert_eq!(ix.stats().avg_doc_len, 1.0);
    }

    #[test]
    fn duplicate_doc_rejected() {
        let err = build_index(
            vec![Ok(doc("a", "x")), Ok(doc("a", "y"))],
            &AnalyzerConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateDocId(id) if id == "a"));
    }

    #[test]
    fn tfidf_values() {
        let ix = build(&[("only", "x")]);
        assert_eq!(ix.tfidf_weight("x", 0).unwrap(), 1.0);

        let ix = build(&[("d1", "a a b"), ("d2", "b"), ("d3", "b c")]);
        // 2 * (ln(4/2) + 1), evaluated independently
        assert!((ix.tfidf_weight("a", 0).unwrap() - 3.386_294_361_119_89).abs() < 1e-12);
        assert!(ix.idf("a").unwrap() > ix.idf("b").unwrap());
        assert!(matches!(
            ix.tfidf_weight("c", 0),
            Err(Error::TermNotInDocument { .. })
        ));
        assert!(ix.tfidf_weight("zzz", 0).is_err());
    }

    #[test]
    fn round_trip() {
        let ix = build(&[("d1", "a b a"), ("d2", "b c")]);
        let back = Index::from_bytes(&ix.to_bytes()).unwrap();
        assert_eq!(ix, back);
        assert_eq!(back.stats(), ix.stats());
        assert_eq!(back.content_fingerprint(), ix.content_fingerprint());
    }

    #[test]
    fn corrupt_files() {
        let ix = build(&[("d1", "a b a"), ("d2", "b c")]);
        let bytes = ix.to_bytes();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            Index::from_bytes(&bad_magic),
            Err(Error::Checksum(_))
        ));

        let truncated = &bytes[..bytes.len() - 5];
        assert!(matches!(
            Index::from_bytes(truncated),
            Err(Error::Checksum(_))
        ));

        let mut flipped = bytes.clone();
        let mid = bytes.len() / 2;
        flipped[mid] ^= 0x01;
        assert!(matches!(
            Index::from_bytes(&flipped),
            Err(Error::Checksum(_))
        ));

        let mut version = bytes.clone();
        version[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            Index::from_bytes(&version),
            Err(Error::VersionMismatch {
                found: 7,
                expected: 1
            })
        ));
    }

    #[test]
    fn analyzer_fingerprint_refusal() {
        let ix = build(&[("d1", "Running dogs")]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ix.bin");
        ix.save(&path).unwrap();
        let loaded = Index::load(&path).unwrap();

        let same = Analyzer::new(AnalyzerConfig::default());
        assert_eq!(
            loaded.analyze_query("Running", &same).unwrap(),
            vec!["running"]
        );

        let stemmed = Analyzer::new(AnalyzerConfig {
            stemmer: Stemmer::Porter,
            ..AnalyzerConfig::default()
        });
        assert!(matches!(
            loaded.analyze_query("Running", &stemmed),
            Err(Error::FingerprintMismatch { .. })
        ));
    }
}
