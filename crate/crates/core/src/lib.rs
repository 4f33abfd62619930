//! Batch retrieval experiments with word embeddings.
//!
//! The crate covers the whole experimental loop: ingesting collections and
//! topics, building an inverted index, BM25 / query-likelihood baselines,
//! embedding-based query expansion, averaged-word-embedding (AWE) ranking,
//! lexicon affect scoring, and TREC-style NDCG / MAP evaluation.

pub mod affect;
pub mod analysis;
pub mod awe;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod expansion;
pub mod experiment;
pub mod fingerprint;
pub mod index;
pub mod ingest;
pub mod pipeline;
pub mod retrieval;

pub use affect::{score_corpus, AffectLexicon, AffectReport, Aggregate, LexiconReport};
pub use analysis::{analyze, Analyzer, AnalyzerConfig, Stemmer};
pub use awe::{
    run_awe_pipeline, score_awe, text_vector, AweConfig, AweRanker, AweRanking, DocVectorTable,
    Weighting,
};
pub use embeddings::{EmbeddingFormat, EmbeddingStore, LoadReport, Neighbor, Similarity};
pub use error::{Error, Result};
pub use evaluation::{
    eval_map, eval_metric, eval_ndcg, format_eval_tsv, read_qrels, read_run, write_run, Metric,
    MetricReport, Qrels, RunFile, DEFAULT_EVAL_DEPTH,
};
pub use expansion::{expand_query, run_expansion_pipeline, ExpansionConfig, ExpansionRun};
pub use experiment::{
    meta_path, run_batch, run_experiment, BatchConfig, BatchOutcome, ExperimentConfig,
    ExperimentOutput, PipelineKind, RunMeta,
};
pub use fingerprint::Fingerprint;
pub use index::{build_index, Index, IndexBuilder, IndexStats, Posting};
pub use ingest::{
    ingest_collection, ingest_topics, RawDocument, SourceFormat, Topic, TopicField, TopicFormat,
};
pub use pipeline::{run_lexical_pipeline, RunOptions, RunOutcome, TopicFailure};
pub use retrieval::{
    execute_boolean, score_bm25, score_ql, Bm25Params, BooleanMode, BooleanQuery, QlParams,
    ScoredDoc, Scorer, ScorerKind,
};
