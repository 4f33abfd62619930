//! Shared per-topic driver for the run-producing pipelines.

use rayon::prelude::*;

use crate::analysis::Analyzer;
use crate::error::{Error, Result};
use crate::evaluation::RunFile;
use crate::index::Index;
use crate::ingest::{Topic, TopicField};
use crate::retrieval::{self, ScoredDoc, Scorer};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub tag: String,
    /// Maximum number of documents per topic.
    pub depth: usize,
    pub topic_field: TopicField,
}

impl RunOptions {
    pub fn new(tag: impl Into<String>, depth: usize) -> Self {
        RunOptions {
            tag: tag.into(),
            depth,
            topic_field: TopicField::Title,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicFailure {
    pub topic_id: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: RunFile,
    pub failures: Vec<TopicFailure>,
    /// Per-topic remarks worth keeping with the run (e.g. a ranking fallback).
    pub notes: Vec<(String, String)>,
}

pub(crate) struct TopicResult {
    pub ranked: Vec<ScoredDoc>,
    pub note: Option<String>,
}

/// Runs `score` for every topic in parallel and assembles the results in
/// topic order. Failing topics are recorded and left out of the run.
pub(crate) fn run_topics<F>(
    topics: &[Topic],
    index: &Index,
    analyzer: &Analyzer,
    options: &RunOptions,
    score: F,
) -> Result<RunOutcome>
where
    F: Fn(&Topic, Vec<String>) -> Result<TopicResult> + Sync,
{
    if options.depth == 0 {
        return Err(Error::InvalidParam("run depth must be at least 1".into()));
    }
    if options.tag.trim().is_empty() || options.tag.contains(char::is_whitespace) {
        return Err(Error::InvalidParam(format!(
            "run tag `{}` must be non-empty and contain no whitespace",
            options.tag
        )));
    }
    index.check_analyzer(analyzer.config())?;
    let results: Vec<Result<TopicResult>> = topics
        .par_iter()
        .map(|topic| {
            let terms = analyzer.analyze(&topic.query_text(options.topic_field));
            if terms.is_empty() {
                return Err(Error::Data("query has no terms after analysis".into()));
            }
            score(topic, terms)
        })
        .collect();

    let mut outcome = RunOutcome {
        run: RunFile::new(options.tag.clone()),
        failures: Vec::new(),
        notes: Vec::new(),
    };
    for (topic, result) in topics.iter().zip(results) {
        match result {
            Ok(TopicResult { mut ranked, note }) => {
                ranked.truncate(options.depth);
                outcome.run.push_ranked(topic.topic_id.clone(), ranked);
                if let Some(note) = note {
                    outcome.notes.push((topic.topic_id.clone(), note));
                }
            }
            Err(e) => {
                log::warn!("topic {}: {e}", topic.topic_id);
                outcome.failures.push(TopicFailure {
                    topic_id: topic.topic_id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(outcome)
}

/// Plain BM25 / QL run over topic titles (the lexical baselines).
pub fn run_lexical_pipeline(
    topics: &[Topic],
    index: &Index,
    analyzer: &Analyzer,
    scorer: &Scorer,
    options: &RunOptions,
) -> Result<RunOutcome> {
    scorer.validate()?;
    run_topics(topics, index, analyzer, options, |_, terms| {
        Ok(TopicResult {
            ranked: retrieval::score(&terms, index, scorer, options.depth)?,
            note: None,
        })
    })
}
