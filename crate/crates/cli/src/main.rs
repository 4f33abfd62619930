use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use embir_core::affect::{score_corpus, AffectLexicon, Aggregate};
use embir_core::analysis::{load_stopwords, AnalyzerConfig, Stemmer};
use embir_core::experiment::{
    run_batch, run_experiment, AweSection, BatchConfig, EmbeddingsSection, ExpandSection,
    ExperimentConfig, PipelineKind, TopicsSection,
};
use embir_core::{
    build_index, eval_metric, format_eval_tsv, ingest_collection, read_qrels, read_run, Bm25Params,
    BooleanMode, EmbeddingFormat, Error, Metric, QlParams, ScorerKind, SourceFormat, TopicField,
    TopicFormat, Weighting,
};

#[derive(Parser)]
#[command(
    name = "embir",
    version,
    about = "Batch retrieval experiments with word embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an inverted index from a document collection.
    Index(IndexArgs),
    /// BM25 or query-likelihood run over a topic set.
    Search(SearchArgs),
    /// Embedding-based query expansion run.
    ExpandRun(ExpandArgs),
    /// Averaged-word-embedding ranking run.
    AweRun(AweArgs),
    /// Mean lexicon affect scores of a collection.
    AffectScore(AffectArgs),
    /// NDCG / MAP of a run against qrels.
    Eval(EvalArgs),
    /// Run every experiment of a batch file and write the results table.
    Batch(BatchArgs),
}

#[derive(Args)]
struct AnalyzerArgs {
    /// Stopword list, one word per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value = "none")]
    stemmer: Stemmer,
    /// Keep letter case.
    #[arg(long)]
    no_lowercase: bool,
}

impl AnalyzerArgs {
    fn config(&self) -> Result<AnalyzerConfig, Failure> {
        let stopwords = match &self.stopwords {
            Some(p) => load_stopwords(existing("--stopwords", p)?)?,
            None => Default::default(),
        };
        Ok(AnalyzerConfig {
            lowercase: !self.no_lowercase,
            stopwords,
            stemmer: self.stemmer,
        })
    }
}

#[derive(Args)]
struct IndexArgs {
    /// Collection file or directory.
    #[arg(long)]
    input: PathBuf,
    /// trec | cacm | jsonl | plain_dir
    #[arg(long)]
    format: SourceFormat,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    analyzer: AnalyzerArgs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    /// trec_topics | tsv | smart
    #[arg(long, default_value = "trec_topics")]
    topic_format: TopicFormat,
    /// title | title+description
    #[arg(long, default_value = "title")]
    topic_field: TopicField,
    #[arg(long, default_value_t = 1000)]
    depth: usize,
    /// Run tag (defaults to the pipeline name).
    #[arg(long)]
    tag: Option<String>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = Bm25Params::default().k1, allow_negative_numbers = true)]
    k1: f64,
    #[arg(long, default_value_t = Bm25Params::default().b, allow_negative_numbers = true)]
    b: f64,
    #[arg(long, default_value_t = QlParams::default().mu, allow_negative_numbers = true)]
    mu: f64,
}

#[derive(Args)]
struct EmbeddingArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// glove_text | word2vec_text
    #[arg(long, default_value = "glove_text")]
    format: EmbeddingFormat,
    /// Drop embedding words that never occur in the index.
    #[arg(long)]
    restrict_to_index: bool,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value = "bm25")]
    scorer: ScorerKind,
}

#[derive(Args)]
struct ExpandArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    emb: EmbeddingArgs,
    /// Minimum cosine (exclusive) for an expansion term.
    #[arg(long = "t", default_value_t = 0.75, allow_negative_numbers = true)]
    threshold: f64,
    #[arg(long, default_value_t = 1)]
    k_neighbors: usize,
    #[arg(long, default_value_t = 64)]
    max_alternatives: usize,
    #[arg(long, default_value = "bm25")]
    scorer: ScorerKind,
    /// union | max-clause
    #[arg(long, default_value = "union")]
    boolean_mode: BooleanMode,
}

#[derive(Args)]
struct AweArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    emb: EmbeddingArgs,
    /// mean | tfidf_weighted | tfidf_divided
    #[arg(long, default_value = "tfidf_weighted")]
    weighting: Weighting,
    /// Lexical candidates to rerank; 0 scores the whole collection.
    #[arg(long, default_value_t = 1000)]
    rerank_depth: usize,
    #[arg(long, default_value = "bm25")]
    candidate_scorer: ScorerKind,
    /// Document-vector cache file.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct AffectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    format: SourceFormat,
    /// TSV lexicon: `word<TAB>dim1<TAB>...` with a header line.
    #[arg(long)]
    lexicon: PathBuf,
    /// JSON report path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// documents | tokens
    #[arg(long, default_value = "documents")]
    aggregate: Aggregate,
    #[command(flatten)]
    analyzer: AnalyzerArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "map,ndcg")]
    metrics: Vec<Metric>,
    #[arg(long, default_value_t = 1000)]
    depth: usize,
    #[arg(long)]
    per_topic: bool,
    /// Write the TSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    /// Batch file (TOML).
    config: PathBuf,
    /// Experiments to run at once.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

fn existing<'a>(flag: &str, path: &'a Path) -> Result<&'a Path, Failure> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Failure::Usage(format!(
            "{flag}: `{}` does not exist",
            path.display()
        )))
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e).into()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Data(format!("stdout: {e}"))),
    }
}

fn cmd_index(args: IndexArgs) -> Result<(), Failure> {
    let config = args.analyzer.config()?;
    let mut docs = ingest_collection(existing("--input", &args.input)?, args.format)?;
    let index = build_index(&mut docs, &config)?;
    let skipped = docs.stats().skipped.len();
    index.save(&args.output)?;
    let stats = index.stats();
    log::info!(
        "indexed {} documents, {} terms, {} tokens ({} records skipped)",
        stats.num_docs,
        index.num_terms(),
        stats.total_tokens,
        skipped
    );
    Ok(())
}

fn experiment(run: &RunArgs, pipeline: PipelineKind) -> Result<ExperimentConfig, Failure> {
    existing("--index", &run.index)?;
    existing("--topics", &run.topics)?;
    Ok(ExperimentConfig {
        tag: run
            .tag
            .clone()
            .unwrap_or_else(|| format!("{pipeline:?}").to_lowercase()),
        pipeline,
        output: run.output.clone(),
        depth: run.depth,
        index: run.index.clone(),
        corpus: None,
        analyzer: None,
        embeddings: None,
        topics: TopicsSection {
            path: run.topics.clone(),
            format: run.topic_format,
            field: run.topic_field,
        },
        bm25: Bm25Params {
            k1: run.k1,
            b: run.b,
        },
        ql: QlParams { mu: run.mu },
        expand: ExpandSection::default(),
        awe: AweSection::default(),
    })
}

fn embeddings(args: &EmbeddingArgs) -> Result<EmbeddingsSection, Failure> {
    existing("--embeddings", &args.embeddings)?;
    Ok(EmbeddingsSection {
        path: args.embeddings.clone(),
        format: args.format,
        restrict_to_index: args.restrict_to_index,
    })
}

fn execute(config: ExperimentConfig) -> Result<(), Failure> {
    let out = run_experiment(&config, Path::new(""))?;
    out.write(&config.output)?;
    if !out.meta.failures.is_empty() {
        log::warn!(
            "{} of {} topics failed; see {}",
            out.meta.failures.len(),
            out.meta.topics_total,
            embir_core::meta_path(&config.output).display()
        );
    }
    Ok(())
}

fn cmd_search(args: SearchArgs) -> Result<(), Failure> {
    let pipeline = match args.scorer {
        ScorerKind::Bm25 => PipelineKind::Bm25,
        ScorerKind::Ql => PipelineKind::Ql,
    };
    execute(experiment(&args.run, pipeline)?)
}

fn cmd_expand_run(args: ExpandArgs) -> Result<(), Failure> {
    let mut config = experiment(&args.run, PipelineKind::Expand)?;
    config.embeddings = Some(embeddings(&args.emb)?);
    config.expand = ExpandSection {
        threshold: args.threshold,
        neighbors_per_term: args.k_neighbors,
        max_alternatives: args.max_alternatives,
        boolean_mode: args.boolean_mode,
        scorer: args.scorer,
    };
    execute(config)
}

fn cmd_awe_run(args: AweArgs) -> Result<(), Failure> {
    let mut config = experiment(&args.run, PipelineKind::Awe)?;
    config.embeddings = Some(embeddings(&args.emb)?);
    config.awe = AweSection {
        weighting: args.weighting,
        rerank_depth: args.rerank_depth,
        candidate_scorer: args.candidate_scorer,
        cache: args.cache,
    };
    execute(config)
}

fn cmd_affect(args: AffectArgs) -> Result<(), Failure> {
    let config = args.analyzer.config()?;
    let (lexicon, lex_report) = AffectLexicon::load(existing("--lexicon", &args.lexicon)?)?;
    log::info!(
        "lexicon: {} entries, {} rows skipped, {} duplicates",
        lex_report.entries,
        lex_report.skipped_rows,
        lex_report.duplicate_words
    );
    let mut docs = ingest_collection(existing("--input", &args.input)?, args.format)?;
    let report = score_corpus(&mut docs, &lexicon, &config, args.aggregate)?;
    write_output(args.output.as_deref(), &report.to_json())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    existing("--run", &args.run)?;
    existing("--qrels", &args.qrels)?;
    let run = read_run(&args.run)?;
    let qrels = read_qrels(&args.qrels)?;
    if args.depth == 0 {
        return Err(Failure::Usage("--depth must be at least 1".into()));
    }
    let mut metrics = args.metrics.clone();
    metrics.dedup();
    let reports = metrics
        .into_iter()
        .map(|m| eval_metric(&run, &qrels, args.depth, m))
        .collect::<Result<Vec<_>, _>>()?;
    write_output(
        args.output.as_deref(),
        &format_eval_tsv(&reports, args.per_topic),
    )
}

fn cmd_batch(args: BatchArgs) -> Result<(), Failure> {
    if args.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let path = existing("batch config", &args.config)?;
    let batch = BatchConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let outcome = run_batch(&batch, base, args.jobs)?;
    match outcome.failed() {
        0 => Ok(()),
        n => Err(Failure::Data(format!(
            "{n} of {} experiments failed; see {}",
            outcome.rows.len(),
            base.join(&batch.table).display()
        ))),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EMBIR_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Index(a) => cmd_index(a),
        Command::Search(a) => cmd_search(a),
        Command::ExpandRun(a) => cmd_expand_run(a),
        Command::AweRun(a) => cmd_awe_run(a),
        Command::AffectScore(a) => cmd_affect(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Batch(a) => cmd_batch(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("embir: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("embir: {m}");
            ExitCode::from(2)
        }
    }
}
