//! `propex`: build a graph index, retrieve, answer and evaluate.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use propex_core::answer::{assemble_answer_prompt, generate_answer, load_exemplars, AnswerRecord, Exemplar};
use propex_core::eval::{load_dataset, run_eval, CachedChat, CachedEmbedder, DatasetFormat, EvalContext, ResponseCache};
use propex_core::indexer::{build_index, ingest_corpus, load_index, persist_index, BuildContext, GraphIndex, Passage};
use propex_core::prompts::PromptSet;
use propex_core::providers::{ChatProvider, EmbeddingProvider, MockChat, MockEmbedder, OpenAiChat, OpenAiEmbedder};
use propex_core::retrieval::{retrieve, QueryTrace, RetrievalContext};
use propex_core::ErrorClass;
use serde::Serialize;

use config::{AppConfig, ConfigError, Overrides};

#[derive(Parser, Debug)]
#[command(name = "propex", version, about = "Graph-based multi-hop retrieval and question answering")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override any config key, e.g. `--set retrieval.alpha=0.3`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = Overrides::parse_assignment)]
    set: Vec<(String, String)>,

    /// Use the deterministic offline providers.
    #[arg(long, global = true)]
    mock_providers: bool,

    /// Response cache directory.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,

    /// Prompt-template directory containing prompts.toml.
    #[arg(long, global = true)]
    prompts: Option<PathBuf>,

    /// Worker threads (default: logical CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// off, error, warn, info, debug or trace.
    #[arg(long, global = true, value_name = "LEVEL")]
    log_level: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an index from a passage corpus or a QA dataset's contexts.
    Index(IndexArgs),
    /// Rank passages for one query and print the trace as JSON.
    Retrieve(QueryArgs),
    /// Retrieve, then answer one query; prints the answer record as JSON.
    Answer(AnswerArgs),
    /// Score a QA dataset and write a JSON-lines report.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["corpus", "dataset"]))]
struct IndexArgs {
    /// JSON-lines corpus with id, title and text.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// QA dataset whose context paragraphs become the corpus.
    #[arg(long, requires = "format")]
    dataset: Option<PathBuf>,
    /// Dataset layout: hotpotqa or 2wiki.
    #[arg(long)]
    format: Option<String>,
    /// Output index directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RetrievalFlags {
    /// Index directory.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Passages to return.
    #[arg(long)]
    k: Option<usize>,
    /// Restart probability of the walk.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the seed and fact overlap bonus when reranking.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[command(flatten)]
    retrieval: RetrievalFlags,
    /// Question text.
    #[arg(long)]
    query: String,
    /// Also write the trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record per-stage wall-clock timings in the trace.
    #[arg(long)]
    timings: bool,
}

#[derive(Args, Debug)]
struct AnswerArgs {
    #[command(flatten)]
    query: QueryArgs,
    /// JSON array of few-shot exemplars.
    #[arg(long)]
    exemplars: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    retrieval: RetrievalFlags,
    /// QA dataset to score.
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset layout: hotpotqa or 2wiki.
    #[arg(long, default_value = "hotpotqa")]
    format: String,
    /// Report path; standard output when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// JSON array of few-shot exemplars.
    #[arg(long)]
    exemplars: Option<PathBuf>,
    /// Score only the first N questions.
    #[arg(long)]
    limit: Option<usize>,
}

/// A failure with the stage that produced it.
struct Failure {
    class: ErrorClass,
    message: String,
}

impl Failure {
    fn at(stage: &str, err: propex_core::Error) -> Self {
        Self {
            class: err.class(),
            message: format!("{stage}: {err}"),
        }
    }

    fn data(message: String) -> Self {
        Self {
            class: ErrorClass::Data,
            message,
        }
    }

    fn exit_code(&self) -> u8 {
        match self.class {
            ErrorClass::Data => 2,
            ErrorClass::Provider => 3,
            ErrorClass::Internal => 4,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::data(e.to_string())
    }
}

fn overrides(cli: &Cli) -> Overrides {
    let mut ov = Overrides(cli.set.clone());
    let mut path = |key: &str, p: &Option<PathBuf>| {
        if let Some(p) = p {
            ov.push(key, p.display());
        }
    };
    path("paths.cache", &cli.cache);
    path("paths.prompts", &cli.prompts);
    let (flags, exemplars) = match &cli.command {
        Command::Index(a) => {
            path("paths.index", &a.out);
            (None, None)
        }
        Command::Retrieve(a) => (Some(&a.retrieval), None),
        Command::Answer(a) => (Some(&a.query.retrieval), a.exemplars.as_ref()),
        Command::Eval(a) => (Some(&a.retrieval), a.exemplars.as_ref()),
    };
    if let Some(e) = exemplars {
        ov.push("paths.exemplars", e.display());
    }
    if let Some(f) = flags {
        if let Some(p) = &f.index {
            ov.push("paths.index", p.display());
        }
        if let Some(k) = f.k {
            ov.push("retrieval.k_passages", k);
        }
        if let Some(a) = f.alpha {
            ov.push("retrieval.alpha", format!("{a:?}"));
        }
        if let Some(l) = f.lambda {
            ov.push("retrieval.lambda_rerank", format!("{l:?}"));
        }
    }
    if let Some(level) = &cli.log_level {
        ov.push("log_level", format!("{level:?}"));
    }
    ov
}

fn init_logging(cfg: &AppConfig) {
    let no_color = std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty());
    let mut builder = env_logger::Builder::new();
    builder.filter_level(cfg.log_level.filter()).target(env_logger::Target::Stderr);
    if no_color {
        builder.write_style(env_logger::WriteStyle::Never);
    }
    if let Ok(spec) = std::env::var("RUST_LOG") {
        builder.parse_filters(&spec);
    }
    let _ = builder.try_init();
}

/// Base providers; mock ones when requested.
struct Providers {
    chat: Box<dyn ChatProvider>,
    embedder: Box<dyn EmbeddingProvider>,
    cache: Option<ResponseCache>,
    prompt_version: String,
}

impl Providers {
    fn new(cfg: &AppConfig, mock: bool, mock_dim: Option<usize>, prompts: &PromptSet) -> Result<Self, Failure> {
        let (chat, embedder): (Box<dyn ChatProvider>, Box<dyn EmbeddingProvider>) = if mock {
            let chat = match &cfg.mock.fixtures {
                Some(p) => MockChat::from_fixture_file(p).map_err(|e| Failure::at("mock fixtures", e))?,
                None => MockChat::new(),
            };
            let dim = mock_dim.unwrap_or(cfg.mock.embed_dim);
            let embedder = MockEmbedder::new(dim, cfg.mock.seed)
                .map_err(|e| Failure::at("mock embedder", propex_core::Error::Provider(e)))?;
            (Box::new(chat), Box::new(embedder))
        } else {
            (
                Box::new(OpenAiChat::new(cfg.provider.clone())),
                Box::new(OpenAiEmbedder::new(cfg.provider.clone())),
            )
        };
        let cache = match &cfg.paths.cache {
            Some(dir) => Some(ResponseCache::open(dir).map_err(|e| Failure::at("response cache", e))?),
            None => None,
        };
        Ok(Self {
            chat,
            embedder,
            cache,
            prompt_version: prompts.version.clone(),
        })
    }

    /// Runs `f` with the providers, routed through the cache when one is set.
    fn with<R>(&self, f: impl FnOnce(&dyn ChatProvider, &dyn EmbeddingProvider) -> R) -> R {
        let out = match &self.cache {
            Some(cache) => {
                let chat = CachedChat {
                    inner: self.chat.as_ref(),
                    cache,
                    prompt_version: self.prompt_version.clone(),
                };
                let embedder = CachedEmbedder {
                    inner: self.embedder.as_ref(),
                    cache,
                };
                f(&chat, &embedder)
            }
            None => f(self.chat.as_ref(), self.embedder.as_ref()),
        };
        if let Some(cache) = &self.cache {
            let s = cache.stats();
            log::info!("response cache {}: {} hits, {} misses", cache.dir().display(), s.hits, s.misses);
        }
        out
    }
}

fn load_prompts(cfg: &AppConfig) -> Result<PromptSet, Failure> {
    match &cfg.paths.prompts {
        Some(dir) => PromptSet::load_dir(dir).map_err(|e| Failure::at("prompts", e)),
        None => Ok(PromptSet::default()),
    }
}

fn load_exemplar_file(cfg: &AppConfig) -> Result<Vec<Exemplar>, Failure> {
    match &cfg.paths.exemplars {
        Some(p) => load_exemplars(p).map_err(|e| Failure::at("exemplars", e)),
        None => Ok(Vec::new()),
    }
}

fn jobs(cli: &Cli, cfg: &AppConfig) -> usize {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    match cli.jobs {
        Some(j) => j.max(1),
        None if cli.mock_providers => cpus,
        None => cpus.min(cfg.provider.concurrency.max(1)),
    }
}

fn index_dir(cfg: &AppConfig, flag: &str) -> Result<PathBuf, Failure> {
    cfg.paths
        .index
        .clone()
        .ok_or_else(|| Failure::data(format!("no index directory: pass {flag} or set paths.index")))
}

fn open_index(cfg: &AppConfig, prompts: &PromptSet) -> Result<GraphIndex, Failure> {
    let dir = index_dir(cfg, "--index")?;
    let index = load_index(&dir).map_err(|e| Failure::at("loading index", e))?;
    if index.meta().prompt_version != prompts.version {
        log::warn!(
            "index was built with prompt set `{}`, querying with `{}`",
            index.meta().prompt_version,
            prompts.version
        );
    }
    Ok(index)
}

/// A closed reader (`propex ... | head`) is not an error.
fn output_failure(e: std::io::Error) -> Result<(), Failure> {
    if e.kind() == std::io::ErrorKind::BrokenPipe {
        return Ok(());
    }
    Err(Failure::data(format!("writing output: {e}")))
}

fn print_json(value: &impl Serialize) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    let mut bytes = serde_json::to_vec_pretty(value).expect("output serializes");
    bytes.push(b'\n');
    out.write_all(&bytes).or_else(output_failure)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("output serializes");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Failure::data(format!("writing {}: {e}", path.display())))
}

fn cmd_index(cli: &Cli, args: &IndexArgs, cfg: &AppConfig) -> Result<(), Failure> {
    let out = index_dir(cfg, "--out")?;
    let passages: Vec<Passage> = match (&args.corpus, &args.dataset) {
        (Some(path), _) => ingest_corpus(path).map_err(|e| Failure::at("reading corpus", e))?,
        (None, Some(path)) => {
            let format: DatasetFormat = args.format.as_deref().unwrap_or("hotpotqa").parse().map_err(|e| Failure::at("index", e))?;
            load_dataset(path, format).map_err(|e| Failure::at("reading dataset", e))?.passages
        }
        (None, None) => unreachable!("clap enforces a source"),
    };
    let prompts = load_prompts(cfg)?;
    let providers = Providers::new(cfg, cli.mock_providers, None, &prompts)?;
    let (index, report) = providers.with(|chat, embedder| {
        build_index(
            passages,
            &BuildContext {
                chat,
                embedder,
                prompts: &prompts,
                params: &cfg.index,
                jobs: jobs(cli, cfg),
            },
        )
        .map_err(|e| Failure::at("building index", e))
    })?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    persist_index(&index, &out).map_err(|e| Failure::at("writing index", e))?;
    print_json(index.meta())
}

fn run_query(cli: &Cli, args: &QueryArgs, cfg: &AppConfig) -> Result<(QueryTrace, GraphIndex, Providers, PromptSet), Failure> {
    let prompts = load_prompts(cfg)?;
    let index = open_index(cfg, &prompts)?;
    let providers = Providers::new(cfg, cli.mock_providers, Some(index.embedding_dim()), &prompts)?;
    let trace = providers.with(|chat, embedder| {
        let ctx = RetrievalContext {
            chat,
            embedder,
            prompts: &prompts,
            record_timings: args.timings,
        };
        retrieve(&args.query, &index, &ctx, &cfg.retrieval).map_err(|e| Failure::at("retrieve", e))
    })?;
    if let Some(path) = &args.trace {
        write_json(path, &trace)?;
    }
    Ok((trace, index, providers, prompts))
}

fn cmd_retrieve(cli: &Cli, args: &QueryArgs, cfg: &AppConfig) -> Result<(), Failure> {
    let (trace, ..) = run_query(cli, args, cfg)?;
    print_json(&trace)
}

fn cmd_answer(cli: &Cli, args: &AnswerArgs, cfg: &AppConfig) -> Result<(), Failure> {
    let exemplars = load_exemplar_file(cfg)?;
    let (trace, index, providers, prompts) = run_query(cli, &args.query, cfg)?;
    let record: AnswerRecord = providers.with(|chat, _| {
        let prompt = assemble_answer_prompt(&trace, &index, &args.query.query, &prompts, &exemplars, cfg.char_budget)
            .map_err(|e| Failure::at("answer prompt", e))?;
        generate_answer(&prompt, chat, &trace.trace_id).map_err(|e| Failure::at("answer", e.into()))
    })?;
    print_json(&record)
}

fn cmd_eval(cli: &Cli, args: &EvalArgs, cfg: &AppConfig) -> Result<(), Failure> {
    let format: DatasetFormat = args.format.parse().map_err(|e| Failure::at("eval", e))?;
    let mut dataset = load_dataset(&args.dataset, format).map_err(|e| Failure::at("reading dataset", e))?;
    if let Some(n) = args.limit {
        dataset.examples.truncate(n);
    }
    let exemplars = load_exemplar_file(cfg)?;
    let prompts = load_prompts(cfg)?;
    let index = open_index(cfg, &prompts)?;
    let missing = dataset
        .passages
        .iter()
        .filter(|p| index.passage(&p.passage_id).is_none())
        .count();
    if missing > 0 {
        log::warn!("{missing} dataset passage(s) are absent from the index");
    }
    let providers = Providers::new(cfg, cli.mock_providers, Some(index.embedding_dim()), &prompts)?;
    let report = providers.with(|chat, embedder| {
        let ctx = EvalContext {
            chat,
            embedder,
            prompts: &prompts,
            params: &cfg.retrieval,
            exemplars: &exemplars,
            char_budget: cfg.char_budget,
            jobs: jobs(cli, cfg),
        };
        run_eval(&index, &dataset.examples, &ctx).map_err(|e| Failure::at("eval", e))
    })?;
    for q in report.per_query.iter().filter(|q| q.error.is_some()) {
        log::error!("question {}: {}", q.question_id, q.error.as_deref().unwrap_or_default());
    }
    match &args.report {
        Some(path) => {
            std::fs::write(path, report.to_jsonl())
                .map_err(|e| Failure::data(format!("writing report {}: {e}", path.display())))?;
            print_json(&report.summary)
        }
        None => std::io::stdout()
            .lock()
            .write_all(&report.to_jsonl())
            .or_else(output_failure),
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = config::resolve(cli.config.as_deref(), &overrides(cli))?;
    init_logging(&cfg);
    match &cli.command {
        Command::Index(a) => cmd_index(cli, a, &cfg),
        Command::Retrieve(a) => cmd_retrieve(cli, a, &cfg),
        Command::Answer(a) => cmd_answer(cli, a, &cfg),
        Command::Eval(a) => cmd_eval(cli, a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.exit_code())
        }
    }
}
