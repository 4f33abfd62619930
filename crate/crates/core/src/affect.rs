//! Lexicon-based affect scoring of whole collections.
//!
//! Each document gets, per dimension, the mean lexicon score of its matched
//! tokens (repeats count). The corpus value is the unweighted mean over
//! documents with at least one match, or with [`Aggregate::Tokens`] the mean
//! over all matched tokens of the collection.
//!
//! Sums are kept exactly (as non-overlapping float partials), so reports do
//! not depend on document order or on how the parallel reduction was split.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{Analyzer, AnalyzerConfig};
use crate::error::{Error, Result};
use crate::ingest::RawDocument;

const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct AffectLexicon {
    dimensions: Vec<String>,
    words: Vec<String>,
    /// Row-major, `words.len() * dimensions.len()`, each in [0, 1].
    scores: Vec<f64>,
    lookup: HashMap<String, u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LexiconReport {
    pub entries: usize,
    pub skipped_rows: usize,
    pub duplicate_words: usize,
}

impl AffectLexicon {
    /// Builds a lexicon from raw scores, min-max normalizing each dimension.
    /// A column with a single distinct value maps to 0.5.
    pub fn from_raw<I>(dimensions: Vec<String>, rows: I) -> Result<(AffectLexicon, usize)>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        if dimensions.is_empty() {
            return Err(Error::Data("affect lexicon has no score dimensions".into()));
        }
        let dims = dimensions.len();
        let mut words = Vec::new();
        let mut raw = Vec::new();
        let mut lookup = HashMap::new();
        let mut duplicates = 0;
        for (word, values) in rows {
            if values.len() != dims {
                return Err(Error::Data(format!(
                    "lexicon entry `{word}` has {} scores, expected {dims}",
                    values.len()
                )));
            }
            let word = word.to_lowercase();
            if lookup.contains_key(&word) {
                duplicates += 1;
                continue;
            }
            lookup.insert(word.clone(), words.len() as u32);
            words.push(word);
            raw.extend(values);
        }
        if words.is_empty() {
            return Err(Error::Empty("affect lexicon has no usable entries".into()));
        }
        let mut scores = raw.clone();
        for d in 0..dims {
            let column = raw.iter().skip(d).step_by(dims);
            let (lo, hi) = column.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
            for w in 0..words.len() {
                let x = &mut scores[w * dims + d];
                *x = if hi == lo {
                    0.5
                } else {
                    ((*x - lo) / (hi - lo)).clamp(0.0, 1.0)
                };
            }
        }
        Ok((
            AffectLexicon {
                dimensions,
                words,
                scores,
                lookup,
            },
            duplicates,
        ))
    }

    /// Parses `word<TAB>dim1<TAB>dim2...` with a header line naming the dimensions.
    pub fn parse(text: &str, origin: &Path) -> Result<(AffectLexicon, LexiconReport)> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| {
            Error::Empty(format!("{}: affect lexicon is empty", origin.display()))
        })?;
        let dimensions: Vec<String> = header
            .split('\t')
            .skip(1)
            .map(|s| s.trim().to_string())
            .collect();
        if dimensions.is_empty() || dimensions.iter().any(String::is_empty) {
            return Err(Error::parse(
                origin,
                1,
                "header must be `word<TAB>dim1<TAB>...`",
            ));
        }
        let mut skipped = 0;
        let mut rows = Vec::new();
        for (i, line) in lines {
            let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
            let word = cells[0];
            let values: Option<Vec<f64>> = (cells.len() == dimensions.len() + 1
                && !word.is_empty())
            .then(|| {
                cells[1..]
                    .iter()
                    .map(|c| c.parse::<f64>().ok().filter(|x| x.is_finite()))
                    .collect()
            })
            .flatten();
            match values {
                Some(v) => rows.push((word.to_string(), v)),
                None => {
                    log::warn!(
                        "{}:{}: lexicon row skipped (missing or invalid score)",
                        origin.display(),
                        i + 1
                    );
                    skipped += 1;
                }
            }
        }
        let (lexicon, duplicates) =
            AffectLexicon::from_raw(dimensions, rows).map_err(|e| match e {
                Error::Empty(m) => Error::Empty(format!("{}: {m}", origin.display())),
                other => other,
            })?;
        let report = LexiconReport {
            entries: lexicon.len(),
            skipped_rows: skipped,
            duplicate_words: duplicates,
        };
        Ok((lexicon, report))
    }

    pub fn load(path: &Path) -> Result<(AffectLexicon, LexiconReport)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        AffectLexicon::parse(&text, path)
    }

    pub fn dimensions(&self) -> &[String] {
        &self.dimensions
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn scores(&self, word: &str) -> Option<&[f64]> {
        let d = self.dimensions.len();
        self.lookup
            .get(word)
            .map(|&i| &self.scores[i as usize * d..(i as usize + 1) * d])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    /// Mean of per-document means.
    #[default]
    Documents,
    /// Mean over every matched token of the collection.
    Tokens,
}

impl FromStr for Aggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "documents" | "docs" => Ok(Aggregate::Documents),
            "tokens" => Ok(Aggregate::Tokens),
            other => Err(Error::Config(format!(
                "unknown aggregate `{other}` (expected documents|tokens)"
            ))),
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregate::Documents => "documents",
            Aggregate::Tokens => "tokens",
        })
    }
}

/// Exact running sum of floats (Shewchuk's non-overlapping partials).
#[derive(Debug, Clone, Default)]
pub(crate) struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub(crate) fn add(&mut self, mut x: f64) {
        let mut kept = 0;
        for i in 0..self.partials.len() {
            let mut y = self.partials[i];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    pub(crate) fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    /// Correctly rounded value of the sum.
    pub(crate) fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(mut n) = p.len().checked_sub(1) else {
            return 0.0;
        };
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            n -= 1;
            let x = hi;
            let y = p[n];
            hi = x + y;
            lo = y - (hi - x);
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }

    /// Sum divided by `count`, refined once with the exact residual so that,
    /// e.g., the mean of `k` copies of `s` is exactly `s`.
    pub(crate) fn mean(&self, count: u64) -> f64 {
        let n = count as f64;
        let m = self.value() / n;
        let prod = m * n;
        let prod_err = m.mul_add(n, -prod);
        let mut residual = self.clone();
        residual.add(-prod);
        residual.add(-prod_err);
        m + residual.value() / n
    }
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    sums: Vec<ExactSum>,
    docs_scored: u64,
    docs_skipped: u64,
    total_tokens: u64,
    matched_tokens: u64,
}

impl Accumulator {
    fn new(dims: usize) -> Self {
        Accumulator {
            sums: vec![ExactSum::default(); dims],
            ..Default::default()
        }
    }

    fn merge(mut self, other: Accumulator) -> Accumulator {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            a.merge(b);
        }
        self.docs_scored += other.docs_scored;
        self.docs_skipped += other.docs_skipped;
        self.total_tokens += other.total_tokens;
        self.matched_tokens += other.matched_tokens;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionReport {
    pub name: String,
    /// `None` when no document matched any lexicon word.
    pub mean: Option<f64>,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffectReport {
    pub aggregate: Aggregate,
    pub means_defined: bool,
    pub dimensions: Vec<DimensionReport>,
    pub docs_scored: u64,
    pub docs_skipped: u64,
    pub total_tokens: u64,
    pub matched_tokens: u64,
}

impl AffectReport {
    pub fn mean(&self, dimension: &str) -> Option<f64> {
        self.dimensions
            .iter()
            .find(|d| d.name == dimension)
            .and_then(|d| d.mean)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Scores a document stream. Lexicon words are passed through the same
/// analyzer as the documents; a word that does not analyze to exactly one
/// token cannot match and is ignored.
pub fn score_corpus<I>(
    docs: I,
    lexicon: &AffectLexicon,
    config: &AnalyzerConfig,
    aggregate: Aggregate,
) -> Result<AffectReport>
where
    I: IntoIterator<Item = Result<RawDocument>>,
{
    if lexicon.is_empty() {
        return Err(Error::Empty("affect lexicon is empty".into()));
    }
    let analyzer = Analyzer::new(config.clone());
    let dims = lexicon.dimensions.len();
    let mut table: HashMap<String, u32> = HashMap::new();
    for (i, word) in lexicon.words.iter().enumerate() {
        if let [token] = analyzer.analyze(word).as_slice() {
            table.entry(token.clone()).or_insert(i as u32);
        }
    }

    let score_doc = |doc: &RawDocument| -> Accumulator {
        let mut acc = Accumulator::new(dims);
        let tokens = analyzer.analyze(&doc.text());
        let mut local = vec![ExactSum::default(); dims];
        let mut matched = 0u64;
        for t in &tokens {
            if let Some(&row) = table.get(t) {
                matched += 1;
                let s = &lexicon.scores[row as usize * dims..(row as usize + 1) * dims];
                for (sum, &x) in local.iter_mut().zip(s) {
                    sum.add(x);
                }
            }
        }
        acc.total_tokens = tokens.len() as u64;
        acc.matched_tokens = matched;
        if matched == 0 {
            acc.docs_skipped = 1;
            return acc;
        }
        acc.docs_scored = 1;
        match aggregate {
            Aggregate::Documents => {
                for (a, s) in acc.sums.iter_mut().zip(&local) {
                    a.add(s.mean(matched));
                }
            }
            Aggregate::Tokens => acc.sums = local,
        }
        acc
    };

    let mut total = Accumulator::new(dims);
    let mut docs = docs.into_iter();
    let mut seen = 0u64;
    loop {
        let chunk: Vec<RawDocument> = docs.by_ref().take(CHUNK).collect::<Result<_>>()?;
        if chunk.is_empty() {
            break;
        }
        seen += chunk.len() as u64;
        let part = chunk
            .par_iter()
            .map(score_doc)
            .reduce(|| Accumulator::new(dims), Accumulator::merge);
        total = total.merge(part);
    }
    if seen == 0 {
        return Err(Error::Empty("no documents to score".into()));
    }

    let denominator = match aggregate {
        Aggregate::Documents => total.docs_scored,
        Aggregate::Tokens => total.matched_tokens,
    };
    let coverage = if total.total_tokens == 0 {
        0.0
    } else {
        total.matched_tokens as f64 / total.total_tokens as f64
    };
    let dimensions = lexicon
        .dimensions
        .iter()
        .zip(&total.sums)
        .map(|(name, sum)| DimensionReport {
            name: name.clone(),
            mean: (denominator > 0).then(|| sum.mean(denominator).clamp(0.0, 1.0)),
            coverage,
        })
        .collect();
    if total.docs_scored == 0 {
        log::warn!("no document matched any lexicon word; means are undefined");
    }
    Ok(AffectReport {
        aggregate,
        means_defined: total.docs_scored > 0,
        dimensions,
        docs_scored: total.docs_scored,
        docs_skipped: total.docs_skipped,
        total_tokens: total.total_tokens,
        matched_tokens: total.matched_tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SourceFormat;
    use proptest::prelude::*;

    fn doc(id: &str, text: &str) -> Result<RawDocument> {
        Ok(RawDocument {
            doc_id: id.into(),
            title: String::new(),
            body: text.into(),
            source_format: SourceFormat::Jsonl,
        })
    }

    fn lexicon(text: &str) -> AffectLexicon {
        AffectLexicon::parse(text, Path::new("lex.tsv")).unwrap().0
    }

    #[test]
    fn min_max_endpoints_and_constant_column() {
        let lex = lexicon("word\tv\tc\ngood\t1.0\t4\nbad\t9.0\t4\n");
        assert_eq!(lex.scores("good").unwrap(), &[0.0, 0.5]);
        assert_eq!(lex.scores("bad").unwrap(), &[1.0, 0.5]);
    }

    #[test]
    fn three_by_two_fixture() {
        let lex = lexicon("word\ta\tb\nx\t2\t10\ny\t4\t-10\nz\t7\t0\n");
        // a: (v - 2) / 5, b: (v + 10) / 20
        assert_eq!(lex.scores("x").unwrap(), &[0.0, 1.0]);
        assert_eq!(lex.scores("y").unwrap(), &[0.4, 0.0]);
        assert_eq!(lex.scores("z").unwrap(), &[1.0, 0.5]);
    }

    #[test]
    fn skipped_rows_duplicates_and_case() {
        let (lex, report) = AffectLexicon::parse(
            "word\tv\nCalm\t1\ncalm\t5\nbroken\t\nworse\tabc\nfine\t3\n",
            Path::new("lex.tsv"),
        )
        .unwrap();
        assert_eq!(
            report,
            LexiconReport {
                entries: 2,
                skipped_rows: 2,
                duplicate_words: 1
            }
        );
        assert_eq!(lex.scores("calm").unwrap(), &[0.0]);
        assert!(AffectLexicon::parse("word\tv\n", Path::new("e.tsv")).is_err());
        assert!(AffectLexicon::parse("", Path::new("e.tsv")).is_err());
    }

    #[test]
    fn constant_lexicon_is_exact() {
        let lex = AffectLexicon::from_raw(
            vec!["d".into()],
            vec![("a".to_string(), vec![0.3]), ("b".to_string(), vec![0.3])],
        )
        .unwrap()
        .0;
        assert_eq!(lex.scores("a").unwrap(), &[0.5]);
        let docs = vec![doc("1", "a b a"), doc("2", "b b b b b b b"), doc("3", "a")];
        let r = score_corpus(docs, &lex, &AnalyzerConfig::default(), Aggregate::Documents).unwrap();
        assert_eq!(r.mean("d"), Some(0.5));
    }

    #[test]
    fn two_point_mean() {
        let lex = lexicon("word\td\nlo\t0\nhi\t1\nmid\t0.5\n");
        // per-doc means 1/5 and 4/5
        let docs = vec![doc("1", "lo lo lo lo hi"), doc("2", "hi hi hi hi lo")];
        let r = score_corpus(docs, &lex, &AnalyzerConfig::default(), Aggregate::Documents).unwrap();
        assert!((r.mean("d").unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(r.docs_scored, 2);
        assert_eq!(r.dimensions[0].coverage, 1.0);
    }

    #[test]
    fn skipped_and_undefined() {
        let lex = lexicon("word\td\nlo\t0\nhi\t1\n");
        let r = score_corpus(
            vec![doc("1", "nothing here")],
            &lex,
            &AnalyzerConfig::default(),
            Aggregate::Documents,
        )
        .unwrap();
        assert!(!r.means_defined);
        assert_eq!(r.mean("d"), None);
        assert_eq!(r.docs_skipped, 1);
        assert!(score_corpus(
            Vec::new(),
            &lex,
            &AnalyzerConfig::default(),
            Aggregate::Documents
        )
        .is_err());
        assert!(r.to_json().contains("\"mean\": null"));
    }

    #[test]
    fn token_aggregate() {
        let lex = lexicon("word\td\nlo\t0\nhi\t1\n");
        let docs = || vec![doc("1", "hi"), doc("2", "lo lo lo")];
        let r = score_corpus(docs(), &lex, &AnalyzerConfig::default(), Aggregate::Tokens).unwrap();
        assert_eq!(r.mean("d"), Some(0.25));
        let r = score_corpus(
            docs(),
            &lex,
            &AnalyzerConfig::default(),
            Aggregate::Documents,
        )
        .unwrap();
        assert_eq!(r.mean("d"), Some(0.5));
    }

    #[test]
    fn exact_sum_basics() {
        let mut s = ExactSum::default();
        for x in [1e100, 1.0, -1e100, 0.1, 0.2] {
            s.add(x);
        }
        assert_eq!(s.value(), 1.3);
        let mut c = ExactSum::default();
        for _ in 0..4999 {
            c.add(0.7);
        }
        assert_eq!(c.mean(4999), 0.7);
    }

    proptest! {
        #[test]
        fn mean_of_copies(s in 0.0f64..1.0, k in 1u64..3000) {
            let mut c = ExactSum::default();
            for _ in 0..k {
                c.add(s);
            }
            prop_assert_eq!(c.mean(k), s);
        }

        #[test]
        fn sum_is_order_free(mut xs in prop::collection::vec(-1e6f64..1e6, 0..40), seed in any::<u64>()) {
            let mut a = ExactSum::default();
            xs.iter().for_each(|&x| a.add(x));
            let n = xs.len();
            if n > 1 {
                xs.swap(0, (seed as usize) % n);
                xs.reverse();
            }
            let mut b = ExactSum::default();
            xs.iter().for_each(|&x| b.add(x));
            prop_assert_eq!(a.value(), b.value());
        }
    }
}
