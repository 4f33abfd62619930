//! TREC run files, qrels, and the MAP / NDCG measures.
//!
//! Conventions follow trec_eval: a judgment with grade >= 1 is relevant,
//! negative grades are clamped to 0, NDCG uses the raw grade as gain with a
//! `log2(rank + 1)` discount. Evaluation walks each run topic in rank order.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::retrieval::ScoredDoc;

pub const DEFAULT_EVAL_DEPTH: usize = 1000;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: HashMap<String, HashMap<String, u32>>,
    topic_order: Vec<String>,
    clamped: usize,
}

impl Qrels {
    pub fn parse(text: &str, origin: &Path) -> Result<Qrels> {
        let mut qrels = Qrels::default();
        for (i, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.is_empty() {
                continue;
            }
            if cols.len() != 4 {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!(
                        "expected `topic iter doc grade`, got {} columns",
                        cols.len()
                    ),
                ));
            }
            let grade: i64 = cols[3].parse().map_err(|_| {
                Error::parse(
                    origin,
                    i + 1,
                    format!("grade `{}` is not an integer", cols[3]),
                )
            })?;
            if grade < 0 {
                log::warn!(
                    "{}:{}: negative grade {grade} clamped to 0",
                    origin.display(),
                    i + 1
                );
                qrels.clamped += 1;
            }
            let grade = grade.clamp(0, u32::MAX as i64) as u32;
            qrels.insert(cols[0], cols[2], grade)?;
        }
        Ok(qrels)
    }

    pub fn insert(&mut self, topic: &str, doc: &str, grade: u32) -> Result<()> {
        if !self.judgments.contains_key(topic) {
            self.topic_order.push(topic.to_owned());
        }
        let docs = self.judgments.entry(topic.to_owned()).or_default();
        if docs.insert(doc.to_owned(), grade).is_some() {
            return Err(Error::DuplicateJudgment {
                topic: topic.to_owned(),
                doc: doc.to_owned(),
            });
        }
        Ok(())
    }

    pub fn grade(&self, topic: &str, doc: &str) -> Option<u32> {
        self.judgments.get(topic)?.get(doc).copied()
    }

    pub fn has_topic(&self, topic: &str) -> bool {
        self.judgments.contains_key(topic)
    }

    pub fn topics(&self) -> &[String] {
        &self.topic_order
    }

    pub fn num_relevant(&self, topic: &str) -> usize {
        self.judgments
            .get(topic)
            .map_or(0, |d| d.values().filter(|&&g| g >= 1).count())
    }

    /// Grades of one topic, highest first.
    pub fn sorted_grades(&self, topic: &str) -> Vec<u32> {
        let mut g: Vec<u32> = self
            .judgments
            .get(topic)
            .map_or_else(Vec::new, |d| d.values().copied().collect());
        g.sort_unstable_by(|a, b| b.cmp(a));
        g
    }

    /// Number of negative grades that were clamped while parsing.
    pub fn clamped(&self) -> usize {
        self.clamped
    }
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Qrels::parse(&text, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub rank: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicRun {
    pub topic_id: String,
    pub entries: Vec<RunEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFile {
    pub tag: String,
    pub topics: Vec<TopicRun>,
}

impl RunFile {
    pub fn new(tag: impl Into<String>) -> Self {
        RunFile {
            tag: tag.into(),
            topics: Vec::new(),
        }
    }

    /// Appends a topic; ranks are assigned from the list order starting at 1.
    pub fn push_ranked(&mut self, topic_id: impl Into<String>, ranked: Vec<ScoredDoc>) {
        let entries = ranked
            .into_iter()
            .enumerate()
            .map(|(i, d)| RunEntry {
                doc_id: d.doc_id,
                rank: i as u32 + 1,
                score: d.score,
            })
            .collect();
        self.topics.push(TopicRun {
            topic_id: topic_id.into(),
            entries,
        });
    }

    pub fn topic(&self, topic_id: &str) -> Option<&TopicRun> {
        self.topics.iter().find(|t| t.topic_id == topic_id)
    }

    pub fn num_entries(&self) -> usize {
        self.topics.iter().map(|t| t.entries.len()).sum()
    }

    /// TREC format: `topic Q0 doc rank score tag`, scores with 6 decimals.
    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for t in &self.topics {
            for e in &t.entries {
                writeln!(
                    out,
                    "{} Q0 {} {} {:.6} {}",
                    t.topic_id, e.doc_id, e.rank, e.score, self.tag
                )
                .expect("write to String");
            }
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<RunFile> {
        let mut run = RunFile::new(String::new());
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut seen: HashSet<(String, String)> = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.is_empty() {
                continue;
            }
            if cols.len() != 6 {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!(
                        "expected `topic Q0 doc rank score tag`, got {} columns",
                        cols.len()
                    ),
                ));
            }
            let rank: u32 = cols[3].parse().map_err(|_| {
                Error::parse(
                    origin,
                    i + 1,
                    format!("rank `{}` is not a non-negative integer", cols[3]),
                )
            })?;
            let score: f64 = cols[4]
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| {
                    Error::parse(
                        origin,
                        i + 1,
                        format!("score `{}` is not a finite number", cols[4]),
                    )
                })?;
            if !seen.insert((cols[0].to_owned(), cols[2].to_owned())) {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("document {} repeated for topic {}", cols[2], cols[0]),
                ));
            }
            if run.tag.is_empty() {
                run.tag = cols[5].to_owned();
            }
            let slot = *index.entry(cols[0].to_owned()).or_insert_with(|| {
                run.topics.push(TopicRun {
                    topic_id: cols[0].to_owned(),
                    entries: Vec::new(),
                });
                run.topics.len() - 1
            });
            run.topics[slot].entries.push(RunEntry {
                doc_id: cols[2].to_owned(),
                rank,
                score,
            });
        }
        if run.topics.is_empty() {
            return Err(Error::Empty(format!(
                "{}: run file has no entries",
                origin.display()
            )));
        }
        for t in &mut run.topics {
            t.entries.sort_by_key(|e| e.rank);
            let contiguous = t
                .entries
                .iter()
                .enumerate()
                .all(|(i, e)| e.rank == i as u32 + 1);
            if !contiguous {
                log::warn!(
                    "{}: ranks of topic {} are not contiguous from 1; renumbering",
                    origin.display(),
                    t.topic_id
                );
                for (i, e) in t.entries.iter_mut().enumerate() {
                    e.rank = i as u32 + 1;
                }
            }
        }
        Ok(run)
    }
}

pub fn write_run(run: &RunFile, path: &Path) -> Result<()> {
    fs::write(path, run.to_trec()).map_err(|e| Error::io(path, e))
}

pub fn read_run(path: &Path) -> Result<RunFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunFile::parse(&text, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Map,
    Ndcg,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Map => "map",
            Metric::Ndcg => "ndcg",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "map" => Ok(Metric::Map),
            "ndcg" => Ok(Metric::Ndcg),
            other => Err(Error::Config(format!(
                "unknown metric `{other}` (expected map|ndcg)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: Metric,
    /// Per-topic values in run order.
    pub per_topic: Vec<(String, f64)>,
    pub mean: f64,
    /// Run topics absent from the qrels.
    pub topics_not_judged: usize,
    /// Judged topics without any relevant document (R = 0 / IDCG = 0).
    pub topics_without_relevant: usize,
}

fn evaluate(run: &RunFile, qrels: &Qrels, depth: usize, metric: Metric) -> Result<MetricReport> {
    if run.num_entries() == 0 {
        return Err(Error::Empty("run has no entries".into()));
    }
    let mut report = MetricReport {
        metric,
        per_topic: Vec::new(),
        mean: 0.0,
        topics_not_judged: 0,
        topics_without_relevant: 0,
    };
    for t in &run.topics {
        if !qrels.has_topic(&t.topic_id) {
            log::warn!("topic {} has no judgments; skipped", t.topic_id);
            report.topics_not_judged += 1;
            continue;
        }
        let value = match metric {
            Metric::Map => average_precision(t, qrels, depth),
            Metric::Ndcg => ndcg(t, qrels, depth),
        };
        match value {
            Some(v) => report.per_topic.push((t.topic_id.clone(), v)),
            None => report.topics_without_relevant += 1,
        }
    }
    if !report.per_topic.is_empty() {
        report.mean =
            report.per_topic.iter().map(|(_, v)| v).sum::<f64>() / report.per_topic.len() as f64;
    }
    Ok(report)
}

fn average_precision(t: &TopicRun, qrels: &Qrels, depth: usize) -> Option<f64> {
    let r = qrels.num_relevant(&t.topic_id);
    if r == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, e) in t.entries.iter().take(depth).enumerate() {
        if qrels.grade(&t.topic_id, &e.doc_id).is_some_and(|g| g >= 1) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / r as f64)
}

fn ndcg(t: &TopicRun, qrels: &Qrels, depth: usize) -> Option<f64> {
    let ideal: f64 = qrels
        .sorted_grades(&t.topic_id)
        .into_iter()
        .take(depth)
        .enumerate()
        .map(|(i, g)| g as f64 / ((i + 2) as f64).log2())
        .sum();
    if ideal == 0.0 {
        return None;
    }
    let dcg: f64 = t
        .entries
        .iter()
        .take(depth)
        .enumerate()
        .map(|(i, e)| {
            qrels.grade(&t.topic_id, &e.doc_id).unwrap_or(0) as f64 / ((i + 2) as f64).log2()
        })
        .sum();
    Some(dcg / ideal)
}

pub fn eval_map(run: &RunFile, qrels: &Qrels, depth: usize) -> Result<MetricReport> {
    evaluate(run, qrels, depth, Metric::Map)
}

pub fn eval_ndcg(run: &RunFile, qrels: &Qrels, depth: usize) -> Result<MetricReport> {
    evaluate(run, qrels, depth, Metric::Ndcg)
}

pub fn eval_metric(
    run: &RunFile,
    qrels: &Qrels,
    depth: usize,
    metric: Metric,
) -> Result<MetricReport> {
    evaluate(run, qrels, depth, metric)
}

/// `metric<TAB>topic<TAB>value` lines, per-topic rows first when requested,
/// then one `all` row per metric.
pub fn format_eval_tsv(reports: &[MetricReport], per_topic: bool) -> String {
    let mut out = String::new();
    for r in reports {
        if per_topic {
            for (topic, v) in &r.per_topic {
                writeln!(out, "{}\t{}\t{:.4}", r.metric, topic, v).expect("write to String");
            }
        }
        writeln!(out, "{}\tall\t{:.4}", r.metric, r.mean).expect("write to String");
    }
    out
}
