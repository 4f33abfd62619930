//! Config-driven experiment runs and batches.
//!
//! An [`ExperimentConfig`] names every input of one run. Its canonical JSON
//! form (sorted keys, paths as written) is hashed, and the hash goes into a
//! `<run>.meta` sidecar next to the run file, which itself stays plain TREC.
//!
//! A batch file holds shared `[defaults]`, a list of `[[experiment]]` tables
//! and the qrels used to fill the consolidated `tag NDCG MAP` table.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{load_stopwords, Analyzer, AnalyzerConfig, Stemmer};
use crate::awe::{run_awe_pipeline, AweConfig, DocVectorTable, Weighting};
use crate::embeddings::{EmbeddingFormat, EmbeddingStore, LoadReport};
use crate::error::{Error, Result};
use crate::evaluation::{eval_map, eval_ndcg, read_qrels, write_run, RunFile, DEFAULT_EVAL_DEPTH};
use crate::expansion::{run_expansion_pipeline, ExpansionConfig, ExpansionRun};
use crate::fingerprint::Fingerprint;
use crate::index::{build_index, Index};
use crate::ingest::{ingest_collection, ingest_topics, SourceFormat, TopicField, TopicFormat};
use crate::pipeline::{run_lexical_pipeline, RunOptions, RunOutcome};
use crate::retrieval::{Bm25Params, BooleanMode, QlParams, Scorer, ScorerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    Bm25,
    Ql,
    Expand,
    Awe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: PathBuf,
    pub format: SourceFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzerSection {
    pub lowercase: bool,
    pub stopwords: Option<PathBuf>,
    pub stemmer: Stemmer,
}

impl Default for AnalyzerSection {
    fn default() -> Self {
        AnalyzerSection {
            lowercase: true,
            stopwords: None,
            stemmer: Stemmer::None,
        }
    }
}

impl AnalyzerSection {
    pub fn to_config(&self, base: &Path) -> Result<AnalyzerConfig> {
        let stopwords = match &self.stopwords {
            Some(p) => load_stopwords(&base.join(p))?,
            None => Default::default(),
        };
        Ok(AnalyzerConfig {
            lowercase: self.lowercase,
            stopwords,
            stemmer: self.stemmer,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingsSection {
    pub path: PathBuf,
    #[serde(default)]
    pub format: EmbeddingFormat,
    /// Drop embedding words that never occur in the index.
    #[serde(default)]
    pub restrict_to_index: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicsSection {
    pub path: PathBuf,
    pub format: TopicFormat,
    #[serde(default)]
    pub field: TopicField,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpandSection {
    pub threshold: f64,
    pub neighbors_per_term: usize,
    pub max_alternatives: usize,
    pub boolean_mode: BooleanMode,
    pub scorer: ScorerKind,
}

impl Default for ExpandSection {
    fn default() -> Self {
        let e = ExpansionConfig::default();
        ExpandSection {
            threshold: e.threshold,
            neighbors_per_term: e.neighbors_per_term,
            max_alternatives: e.max_alternatives,
            boolean_mode: BooleanMode::default(),
            scorer: ScorerKind::Bm25,
        }
    }
}

impl ExpandSection {
    pub fn expansion(&self) -> ExpansionConfig {
        ExpansionConfig {
            threshold: self.threshold,
            neighbors_per_term: self.neighbors_per_term,
            max_alternatives: self.max_alternatives,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AweSection {
    pub weighting: Weighting,
    pub rerank_depth: usize,
    pub candidate_scorer: ScorerKind,
    /// Document-vector cache file; built on first use.
    pub cache: Option<PathBuf>,
}

impl Default for AweSection {
    fn default() -> Self {
        let a = AweConfig::default();
        AweSection {
            weighting: a.weighting,
            rerank_depth: a.rerank_depth,
            candidate_scorer: a.candidate_scorer,
            cache: None,
        }
    }
}

fn default_depth() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tag: String,
    pub pipeline: PipelineKind,
    pub output: PathBuf,
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Index file; built from `corpus` when it does not exist yet.
    pub index: PathBuf,
    #[serde(default)]
    pub corpus: Option<CorpusSection>,
    /// Analyzer used when building; a loaded index must match it.
    #[serde(default)]
    pub analyzer: Option<AnalyzerSection>,
    #[serde(default)]
    pub embeddings: Option<EmbeddingsSection>,
    pub topics: TopicsSection,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub ql: QlParams,
    #[serde(default)]
    pub expand: ExpandSection,
    #[serde(default)]
    pub awe: AweSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Sorted-key JSON of the full config, defaults filled in.
    pub fn canonical(&self) -> String {
        serde_json::to_value(self)
            .expect("config serializes")
            .to_string()
    }

    pub fn config_hash(&self) -> Fingerprint {
        Fingerprint::of(self.canonical().as_bytes())
    }

    /// Checks parameters and that every referenced input exists.
    pub fn validate(&self, base: &Path) -> Result<()> {
        let missing = |what: &str, p: &Path| {
            Error::Config(format!(
                "{what} `{}` does not exist",
                base.join(p).display()
            ))
        };
        if self.tag.trim().is_empty() || self.tag.contains(char::is_whitespace) {
            return Err(Error::Config(format!(
                "tag `{}` must be non-empty and contain no whitespace",
                self.tag
            )));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if !base.join(&self.index).exists() {
            match &self.corpus {
                None => return Err(missing("index", &self.index)),
                Some(c) if !base.join(&c.path).exists() => return Err(missing("corpus", &c.path)),
                Some(_) => {}
            }
        }
        if !base.join(&self.topics.path).exists() {
            return Err(missing("topics", &self.topics.path));
        }
        if let Some(sw) = self.analyzer.as_ref().and_then(|a| a.stopwords.as_ref()) {
            if !base.join(sw).exists() {
                return Err(missing("stopword list", sw));
            }
        }
        match (&self.embeddings, self.pipeline) {
            (None, PipelineKind::Expand | PipelineKind::Awe) => {
                return Err(Error::Config(
                    format!(
                        "pipeline `{:?}` needs an [embeddings] section",
                        self.pipeline
                    )
                    .to_lowercase(),
                ))
            }
            (Some(e), _) if !base.join(&e.path).exists() => {
                return Err(missing("embeddings", &e.path))
            }
            _ => {}
        }
        self.bm25.validate()?;
        self.ql.validate()?;
        if self.pipeline == PipelineKind::Expand {
            self.expand.expansion().validate()?;
        }
        Ok(())
    }

    fn scorer(&self, kind: ScorerKind) -> Scorer {
        Scorer::new(kind, self.bm25, self.ql)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicNote {
    pub topic: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub tag: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub index_fingerprint: String,
    pub analyzer_fingerprint: String,
    pub embeddings_fingerprint: Option<String>,
    pub embeddings_load: Option<LoadReport>,
    pub topics_total: usize,
    pub topics_run: usize,
    pub failures: Vec<TopicNote>,
    pub notes: Vec<TopicNote>,
}

impl RunMeta {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("meta serializes") + "\n"
    }
}

/// Sidecar path for a run file: the run path with `.meta` appended.
pub fn meta_path(run_path: &Path) -> PathBuf {
    let mut s = run_path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub run: RunFile,
    pub meta: RunMeta,
}

impl ExperimentOutput {
    pub fn write(&self, run_path: &Path) -> Result<()> {
        if let Some(dir) = run_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_run(&self.run, run_path)?;
        let meta = meta_path(run_path);
        fs::write(&meta, self.meta.to_json()).map_err(|e| Error::io(&meta, e))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Loads the index named by the config, building (and saving) it from the
/// corpus when the file does not exist.
pub fn open_index(config: &ExperimentConfig, base: &Path) -> Result<Index> {
    let path = base.join(&config.index);
    let wanted = config
        .analyzer
        .as_ref()
        .map(|a| a.to_config(base))
        .transpose()?;
    if path.exists() {
        let index = Index::load(&path)?;
        if let Some(w) = &wanted {
            index.check_analyzer(w)?;
        }
        return Ok(index);
    }
    let corpus = config.corpus.as_ref().ok_or_else(|| {
        Error::Config(format!(
            "index `{}` does not exist and no corpus is configured",
            path.display()
        ))
    })?;
    let docs = ingest_collection(&base.join(&corpus.path), corpus.format)?;
    let index = build_index(docs, &wanted.unwrap_or_default())?;
    write_atomic(&path, &index.to_bytes())?;
    Ok(index)
}

fn load_store(
    section: &EmbeddingsSection,
    base: &Path,
    index: &Index,
) -> Result<(EmbeddingStore, LoadReport)> {
    let (store, report) = EmbeddingStore::load(&base.join(&section.path), section.format)?;
    if section.restrict_to_index {
        Ok((store.restrict_to(|w| index.contains_term(w)), report))
    } else {
        Ok((store, report))
    }
}

/// Runs one experiment; nothing is written.
pub fn run_experiment(config: &ExperimentConfig, base: &Path) -> Result<ExperimentOutput> {
    config.validate(base)?;
    let index = open_index(config, base)?;
    let analyzer = Analyzer::new(index.analyzer_config().clone());
    let topics = ingest_topics(&base.join(&config.topics.path), config.topics.format)?;
    let mut options = RunOptions::new(config.tag.clone(), config.depth);
    options.topic_field = config.topics.field;

    let mut store_info = None;
    let outcome: RunOutcome = match config.pipeline {
        PipelineKind::Bm25 => run_lexical_pipeline(
            &topics,
            &index,
            &analyzer,
            &config.scorer(ScorerKind::Bm25),
            &options,
        )?,
        PipelineKind::Ql => run_lexical_pipeline(
            &topics,
            &index,
            &analyzer,
            &config.scorer(ScorerKind::Ql),
            &options,
        )?,
        PipelineKind::Expand => {
            let section = config.embeddings.as_ref().expect("validated");
            let (store, report) = load_store(section, base, &index)?;
            store_info = Some((store.fingerprint(), report));
            let settings = ExpansionRun {
                expansion: config.expand.expansion(),
                boolean_mode: config.expand.boolean_mode,
            };
            let scorer = config.scorer(config.expand.scorer);
            run_expansion_pipeline(
                &topics, &index, &store, &analyzer, &settings, &scorer, &options,
            )?
        }
        PipelineKind::Awe => {
            let section = config.embeddings.as_ref().expect("validated");
            let (store, report) = load_store(section, base, &index)?;
            store_info = Some((store.fingerprint(), report));
            let awe = AweConfig {
                weighting: config.awe.weighting,
                rerank_depth: config.awe.rerank_depth,
                candidate_scorer: config.awe.candidate_scorer,
                bm25: config.bm25,
                ql: config.ql,
            };
            let table = match &config.awe.cache {
                Some(p) => Some(DocVectorTable::load_or_build(
                    &base.join(p),
                    &index,
                    &store,
                    awe.weighting,
                )?),
                None => None,
            };
            run_awe_pipeline(
                &topics,
                &index,
                &store,
                &analyzer,
                &awe,
                table.as_ref(),
                &options,
            )?
        }
    };
    if outcome.run.num_entries() == 0 {
        let first = outcome
            .failures
            .first()
            .map(|f| format!(" (topic {}: {})", f.topic_id, f.message));
        return Err(Error::Data(format!(
            "run is empty: no topic retrieved any document{}",
            first.unwrap_or_default()
        )));
    }
    let (embeddings_fingerprint, embeddings_load) = match store_info {
        Some((fp, report)) => (Some(fp.to_hex()), Some(report)),
        None => (None, None),
    };
    let meta = RunMeta {
        tag: config.tag.clone(),
        config_hash: config.config_hash().to_hex(),
        config: serde_json::to_value(config).expect("config serializes"),
        index_fingerprint: index.content_fingerprint().to_hex(),
        analyzer_fingerprint: index.analyzer_fingerprint().to_hex(),
        embeddings_fingerprint,
        embeddings_load,
        topics_total: topics.len(),
        topics_run: outcome.run.topics.len(),
        failures: outcome
            .failures
            .iter()
            .map(|f| TopicNote {
                topic: f.topic_id.clone(),
                note: f.message.clone(),
            })
            .collect(),
        notes: outcome
            .notes
            .iter()
            .map(|(t, n)| TopicNote {
                topic: t.clone(),
                note: n.clone(),
            })
            .collect(),
    };
    Ok(ExperimentOutput {
        run: outcome.run,
        meta,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchFile {
    qrels: PathBuf,
    table: PathBuf,
    #[serde(default = "default_eval_depth")]
    eval_depth: usize,
    #[serde(default)]
    defaults: toml::Table,
    #[serde(default)]
    experiment: Vec<toml::Table>,
}

fn default_eval_depth() -> usize {
    DEFAULT_EVAL_DEPTH
}

#[derive(Debug, Clone)]
pub struct BatchEntry {
    pub label: String,
    /// A per-experiment config error fails that row only.
    pub config: std::result::Result<ExperimentConfig, String>,
}

#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub qrels: PathBuf,
    pub table: PathBuf,
    pub eval_depth: usize,
    pub experiments: Vec<BatchEntry>,
}

fn merge_tables(base: &toml::Table, over: &toml::Table) -> toml::Table {
    let mut out = base.clone();
    for (k, v) in over {
        let merged = match (out.get(k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => {
                toml::Value::Table(merge_tables(a, b))
            }
            _ => v.clone(),
        };
        out.insert(k.clone(), merged);
    }
    out
}

impl BatchConfig {
    pub fn from_toml(text: &str) -> Result<BatchConfig> {
        let file: BatchFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if file.experiment.is_empty() {
            return Err(Error::Config(
                "batch lists no [[experiment]] entries".into(),
            ));
        }
        if file.eval_depth == 0 {
            return Err(Error::Config("eval_depth must be at least 1".into()));
        }
        let experiments: Vec<BatchEntry> = file
            .experiment
            .iter()
            .enumerate()
            .map(|(i, table)| {
                let merged = merge_tables(&file.defaults, table);
                let label = match merged.get("tag") {
                    Some(toml::Value::String(s)) => s.clone(),
                    _ => format!("experiment-{}", i + 1),
                };
                let config = merged
                    .try_into::<ExperimentConfig>()
                    .map_err(|e| e.to_string());
                BatchEntry { label, config }
            })
            .collect();
        let mut tags = HashSet::new();
        let mut outputs = HashSet::new();
        for e in &experiments {
            if !tags.insert(e.label.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate experiment tag `{}`",
                    e.label
                )));
            }
            if let Ok(c) = &e.config {
                if !outputs.insert(c.output.clone()) {
                    return Err(Error::Config(format!(
                        "two experiments write `{}`",
                        c.output.display()
                    )));
                }
            }
        }
        Ok(BatchConfig {
            qrels: file.qrels,
            table: file.table,
            eval_depth: file.eval_depth,
            experiments,
        })
    }

    pub fn load(path: &Path) -> Result<BatchConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        BatchConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub tag: String,
    /// (NDCG, MAP) or the failure message.
    pub result: std::result::Result<(f64, f64), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub rows: Vec<BatchRow>,
}

impl BatchOutcome {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_err()).count()
    }

    /// `tag<TAB>NDCG<TAB>MAP`, one row per experiment in config order;
    /// failed experiments show `NA`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("tag\tNDCG\tMAP\n");
        for row in &self.rows {
            match row.result {
                Ok((ndcg, map)) => out.push_str(&format!("{}\t{:.4}\t{:.4}\n", row.tag, ndcg, map)),
                Err(_) => out.push_str(&format!("{}\tNA\tNA\n", row.tag)),
            }
        }
        out
    }
}

/// Runs every experiment, writes run files and the consolidated table.
/// `jobs > 1` runs that many experiments at once.
pub fn run_batch(batch: &BatchConfig, base: &Path, jobs: usize) -> Result<BatchOutcome> {
    let qrels = read_qrels(&base.join(&batch.qrels))?;
    let one = |entry: &BatchEntry| -> BatchRow {
        let result = entry
            .config
            .as_ref()
            .map_err(|e| format!("invalid config: {e}"))
            .and_then(|config| {
                let out = run_experiment(config, base).map_err(|e| e.to_string())?;
                out.write(&base.join(&config.output))
                    .map_err(|e| e.to_string())?;
                let ndcg =
                    eval_ndcg(&out.run, &qrels, batch.eval_depth).map_err(|e| e.to_string())?;
                let map =
                    eval_map(&out.run, &qrels, batch.eval_depth).map_err(|e| e.to_string())?;
                Ok((ndcg.mean, map.mean))
            });
        if let Err(e) = &result {
            log::error!("experiment `{}` failed: {e}", entry.label);
        }
        BatchRow {
            tag: entry.label.clone(),
            result,
        }
    };
    let rows: Vec<BatchRow> = if jobs <= 1 {
        batch.experiments.iter().map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| batch.experiments.par_iter().map(one).collect())
    };
    let outcome = BatchOutcome { rows };
    write_atomic(&base.join(&batch.table), outcome.to_tsv().as_bytes())?;
    Ok(outcome)
}
