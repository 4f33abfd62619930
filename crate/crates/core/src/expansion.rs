//! Embedding-based query expansion.
//!
//! Each query term may be replaced by one of its embedding-space neighbours
//! whose cosine exceeds a threshold. Every combination of replacements forms
//! an alternative clause, and the original query OR all alternatives is
//! executed as one boolean query.
//!
//! Alternatives are enumerated in a fixed order: fewer substitutions first,
//! then by the (lexicographically smallest) set of substituted positions,
//! then by neighbour rank (strongest cosine first). The list is cut after
//! `max_alternatives` clauses beyond the original, so the enumeration is
//! lazy and long queries never materialize the full product.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::analysis::Analyzer;
use crate::embeddings::{EmbeddingStore, Neighbor};
use crate::error::{Error, Result};
use crate::index::Index;
use crate::ingest::Topic;
use crate::pipeline::{run_topics, RunOptions, RunOutcome, TopicResult};
use crate::retrieval::{execute_boolean, BooleanMode, BooleanQuery, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    /// Minimum cosine (exclusive) for a neighbour to count as an expansion.
    pub threshold: f64,
    pub neighbors_per_term: usize,
    pub max_alternatives: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            threshold: 0.75,
            neighbors_per_term: 1,
            max_alternatives: 64,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidParam(format!(
                "threshold must lie in [-1, 1] (got {})",
                self.threshold
            )));
        }
        if self.neighbors_per_term == 0 || self.max_alternatives == 0 {
            return Err(Error::InvalidParam(
                "neighbors_per_term and max_alternatives must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Expansion candidates per query position; empty for OOV or unexpandable terms.
pub fn expansion_candidates(
    query: &[String],
    store: &EmbeddingStore,
    config: &ExpansionConfig,
) -> Vec<Vec<Neighbor>> {
    query
        .iter()
        .map(|q| {
            store
                .nearest_neighbors(q, config.neighbors_per_term, config.threshold)
                .unwrap_or_default()
        })
        .collect()
}

/// Enumerates the clause list for given per-position candidates (each list
/// ordered best-first). The first clause is always `query` itself.
pub fn substitution_clauses(
    query: &[String],
    candidates: &[Vec<String>],
    max_alternatives: usize,
) -> Vec<Vec<String>> {
    assert_eq!(
        query.len(),
        candidates.len(),
        "one candidate list per query term"
    );
    let mut clauses = vec![query.to_vec()];
    let expandable: Vec<usize> = (0..query.len())
        .filter(|&i| !candidates[i].is_empty())
        .collect();
    'outer: for n_subs in 1..=expandable.len() {
        for positions in expandable.iter().copied().combinations(n_subs) {
            let choices = positions
                .iter()
                .map(|&p| 0..candidates[p].len())
                .multi_cartesian_product();
            for choice in choices {
                if clauses.len() > max_alternatives {
                    break 'outer;
                }
                let mut clause = query.to_vec();
                for (&p, &c) in positions.iter().zip(&choice) {
                    clause[p] = candidates[p][c].clone();
                }
                clauses.push(clause);
            }
        }
    }
    clauses
}

pub fn expand_query(
    query: &[String],
    store: &EmbeddingStore,
    config: &ExpansionConfig,
) -> Result<BooleanQuery> {
    if query.is_empty() {
        return Err(Error::InvalidParam("cannot expand an empty query".into()));
    }
    config.validate()?;
    let candidates: Vec<Vec<String>> = expansion_candidates(query, store, config)
        .into_iter()
        .map(|ns| ns.into_iter().map(|n| n.word).collect())
        .collect();
    BooleanQuery::new(substitution_clauses(
        query,
        &candidates,
        config.max_alternatives,
    ))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExpansionRun {
    pub expansion: ExpansionConfig,
    pub boolean_mode: BooleanMode,
}

/// Analyze each topic, expand it, and execute the boolean query.
pub fn run_expansion_pipeline(
    topics: &[Topic],
    index: &Index,
    store: &EmbeddingStore,
    analyzer: &Analyzer,
    settings: &ExpansionRun,
    scorer: &Scorer,
    options: &RunOptions,
) -> Result<RunOutcome> {
    settings.expansion.validate()?;
    scorer.validate()?;
    run_topics(topics, index, analyzer, options, |_, terms| {
        let query = expand_query(&terms, store, &settings.expansion)?;
        let ranked = execute_boolean(&query, index, scorer, settings.boolean_mode, options.depth)?;
        let note = (query.clauses().len() > 1).then(|| format!("expanded: {query}"));
        Ok(TopicResult { ranked, note })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terms(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn cands(lists: &[&[&str]]) -> Vec<Vec<String>> {
        lists
            .iter()
            .map(|l| l.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn example_shape() {
        let q = terms("recent research about ai");
        let c = cands(&[&["latest"], &[], &[], &[]]);
        assert_eq!(
            substitution_clauses(&q, &c, 64),
            vec![
                terms("recent research about ai"),
                terms("latest research about ai")
            ]
        );
    }

    #[test]
    fn two_by_two() {
        let c = cands(&[&["x"], &["y"]]);
        assert_eq!(
            substitution_clauses(&terms("a b"), &c, 64),
            vec![terms("a b"), terms("x b"), terms("a y"), terms("x y")]
        );
    }

    #[test]
    fn enumeration_order_and_truncation() {
        let c = cands(&[&["x1", "x2"], &[], &["z1"]]);
        let all = substitution_clauses(&terms("a b c"), &c, 64);
        assert_eq!(
            all,
            vec![
                terms("a b c"),
                terms("x1 b c"),
                terms("x2 b c"),
                terms("a b z1"),
                terms("x1 b z1"),
                terms("x2 b z1"),
            ]
        );
        assert_eq!(
            substitution_clauses(&terms("a b c"), &c, 2),
            all[..3].to_vec()
        );
    }

    #[test]
    fn no_expansion() {
        let c = cands(&[&[], &[]]);
        assert_eq!(
            substitution_clauses(&terms("a b"), &c, 64),
            vec![terms("a b")]
        );
    }

    #[test]
    fn long_query_stays_bounded() {
        let q: Vec<String> = (0..40).map(|i| format!("t{i}")).collect();
        let c: Vec<Vec<String>> = (0..40)
            .map(|i| vec![format!("u{i}"), format!("v{i}")])
            .collect();
        assert_eq!(substitution_clauses(&q, &c, 64).len(), 65);
    }

    #[test]
    fn expand_with_store() {
        let store = EmbeddingStore::from_rows(vec![
            ("recent".to_string(), vec![1.0, 0.0, 0.0]),
            ("latest".to_string(), vec![0.8, 0.6, 0.0]),
            ("research".to_string(), vec![0.0, 0.0, 1.0]),
        ])
        .unwrap();
        let q = expand_query(
            &terms("recent research about ai"),
            &store,
            &ExpansionConfig::default(),
        )
        .unwrap();
        assert_eq!(
            q.clauses(),
            &[
                terms("recent research about ai"),
                terms("latest research about ai")
            ]
        );

        let strict = ExpansionConfig {
            threshold: 0.9,
            ..ExpansionConfig::default()
        };
        assert_eq!(
            expand_query(&terms("recent"), &store, &strict)
                .unwrap()
                .clauses()
                .len(),
            1
        );
        assert!(expand_query(&[], &store, &strict).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ExpansionConfig {
            threshold: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ExpansionConfig {
            neighbors_per_term: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ExpansionConfig {
            max_alternatives: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
