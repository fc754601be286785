//! The `contextdb` command line: ingest, query, demo-shoes, chat and bench.
//!
//! Exit codes are a stable contract: 0 on success, 1 for usage, config or
//! filter-syntax errors, 2 for data and storage errors (including a failed
//! demo check).
//!
//! The data directory comes from `--home`, else `CONTEXTDB_HOME`, else
//! `.contextdb`. It holds `index/` (snapshot plus embedder description),
//! `conversations.jsonl`, `profiles.jsonl`, `templates/` and an optional
//! `config.toml` of defaults.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::{
    bench, chat, demo_shoes, ingest, query, render_filter_error, CatalogRecord, ChatOptions,
    IngestOptions, IngestReport,
};
pub use config::{Config, EmbedderConfig, EmbedderKind};

use crate::conversation::ConversationError;
use crate::filter::{FilterExpr, FilterParseError};
use crate::index::{HnswParams, IndexError, IndexKind, IvfParams};
use crate::pipeline::TemplateError;
use crate::situational::ProfileError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{}", render_filter_error(.input, .source))]
    Filter {
        input: String,
        source: FilterParseError,
    },
    #[error("cannot access {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Conversation(#[from] ConversationError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Filter { .. } => 1,
            _ => 2,
        }
    }
}

pub fn parse_filter(input: &str) -> Result<FilterExpr, CliError> {
    FilterExpr::parse(input).map_err(|source| CliError::Filter {
        input: input.to_owned(),
        source,
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "contextdb",
    version,
    about = "Embedded multi-context store and RAG pipeline"
)]
pub struct Cli {
    /// Data directory.
    #[arg(long, global = true, env = "CONTEXTDB_HOME")]
    pub home: Option<PathBuf>,
    /// Defaults file (TOML). Defaults to `<home>/config.toml` when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an index from a JSONL catalog and snapshot it.
    Ingest(IngestArgs),
    /// Search a snapshotted index.
    Query(QueryArgs),
    /// Reproduce the running-shoes example and check every figure.
    DemoShoes,
    /// Answer questions from standard input, one per line.
    Chat(ChatArgs),
    /// Measure recall@k and latency against the exact scan.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct IndexParamArgs {
    /// HNSW links per node on upper layers.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub ef_construction: Option<usize>,
    #[arg(long)]
    pub ef_search: Option<usize>,
    /// IVF list count; defaults to ceil(sqrt(n)).
    #[arg(long)]
    pub nlist: Option<usize>,
    /// IVF lists probed per query; defaults to min(8, nlist).
    #[arg(long)]
    pub nprobe: Option<usize>,
}

impl IndexParamArgs {
    fn hnsw(&self, seed: u64) -> HnswParams {
        let d = HnswParams::default();
        HnswParams {
            m: self.m.unwrap_or(d.m),
            ef_construction: self.ef_construction.unwrap_or(d.ef_construction),
            ef_search: self.ef_search.unwrap_or(d.ef_search),
            seed,
        }
    }

    fn ivf(&self, n: usize, seed: u64) -> Option<IvfParams> {
        if self.nlist.is_none() && self.nprobe.is_none() {
            return None;
        }
        let mut p = IvfParams::for_training_size(n);
        if let Some(nlist) = self.nlist {
            p.nlist = nlist;
            p.nprobe = 8.min(nlist);
        }
        if let Some(nprobe) = self.nprobe {
            p.nprobe = nprobe;
        }
        p.seed = seed;
        Some(p)
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    /// Output directory; defaults to `<home>/index`.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub embedder: Option<EmbedderKind>,
    /// Hash embedder dimension (the fixture embedder is always 2-D).
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub kind: Option<IndexKind>,
    #[command(flatten)]
    pub params: IndexParamArgs,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Index directory; defaults to `<home>/index`.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long = "q")]
    pub question: String,
    #[arg(long)]
    pub k: Option<usize>,
    /// For example `price<100 && brand="Reebok"`.
    #[arg(long)]
    pub filter: Option<String>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long)]
    pub session: String,
    #[arg(long)]
    pub user: String,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub filter: Option<String>,
    /// Print retrieved ids and per-stage latency after each answer.
    #[arg(long)]
    pub verbose: bool,
    /// Index directory; defaults to `<home>/index`.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub history_window: Option<usize>,
    #[arg(long)]
    pub cache_capacity: Option<usize>,
    #[arg(long)]
    pub cache_ttl_ms: Option<u64>,
    /// Template name, loaded from `<home>/templates/<name>.txt`.
    #[arg(long)]
    pub template: Option<String>,
    /// JSONL profiles to load before the first question.
    #[arg(long)]
    pub profiles_seed: Option<PathBuf>,
    /// Also index each question's embedding.
    #[arg(long)]
    pub store_questions: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = IndexKind::Hnsw)]
    pub kind: IndexKind,
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    #[arg(long, default_value_t = config::DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub params: IndexParamArgs,
}

fn home_dir(cli: &Cli) -> PathBuf {
    cli.home
        .clone()
        .unwrap_or_else(|| PathBuf::from(config::DEFAULT_HOME))
}

fn index_dir(explicit: &Option<PathBuf>, home: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| home.join("index"))
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(
    args: I,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    1
                }
            };
        }
    };
    match dispatch(&cli, stdin, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(
    cli: &Cli,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, CliError> {
    let home = home_dir(cli);
    let cfg = Config::load(cli.config.as_deref(), &home)?;
    let io_err = |source: std::io::Error| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    };
    match &cli.command {
        Command::Ingest(a) => {
            let kind = a.embedder.or(cfg.embedder).unwrap_or(EmbedderKind::Hash);
            let seed = a.seed.or(cfg.seed).unwrap_or(config::DEFAULT_SEED);
            let dim = match kind {
                EmbedderKind::Fixture => {
                    if let Some(d) = a.dim.filter(|d| *d != 2) {
                        return Err(CliError::Usage(format!(
                            "the fixture embedder is 2-dimensional; --dim {d} is not supported"
                        )));
                    }
                    2
                }
                EmbedderKind::Hash => a.dim.or(cfg.dim).unwrap_or(config::DEFAULT_HASH_DIM),
            };
            let opts = IngestOptions {
                catalog: a.catalog.clone(),
                index_dir: index_dir(&a.index, &home),
                embedder: EmbedderConfig { kind, dim, seed },
                kind: a.kind.or(cfg.kind).unwrap_or(IndexKind::Flat),
                hnsw: a.params.hnsw(seed),
                nlist: a.params.nlist,
                nprobe: a.params.nprobe,
            };
            let report = ingest(&opts, stderr)?;
            writeln!(
                stdout,
                "ingested {} documents into {} ({} index, {} skipped)",
                report.ingested,
                report.index_path.display(),
                opts.kind,
                report.skipped.len()
            )
            .map_err(io_err)?;
            Ok(0)
        }
        Command::Query(a) => {
            let filter = a.filter.as_deref().map(parse_filter).transpose()?;
            let k = a.k.or(cfg.k).unwrap_or(4);
            let hits = query(&index_dir(&a.index, &home), &a.question, k, filter.as_ref())?;
            if hits.is_empty() {
                writeln!(stdout, "no results").map_err(io_err)?;
            }
            for (hit, doc) in hits {
                let meta: Vec<String> = doc
                    .metadata()
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                writeln!(
                    stdout,
                    "{}. {} distance={:.2} {}",
                    hit.rank,
                    hit.doc_id,
                    hit.distance,
                    meta.join(" ")
                )
                .map_err(io_err)?;
            }
            Ok(0)
        }
        Command::DemoShoes => Ok(if demo_shoes(stdout)? { 0 } else { 2 }),
        Command::Chat(a) => {
            let filter = a.filter.as_deref().map(parse_filter).transpose()?;
            let opts = ChatOptions {
                session: a.session.clone(),
                user: a.user.clone(),
                k: a.k.or(cfg.k).unwrap_or(4),
                filter,
                verbose: a.verbose,
                index_dir: index_dir(&a.index, &home),
                home: home.clone(),
                history_window: a.history_window.or(cfg.history_window),
                cache_capacity: a.cache_capacity.or(cfg.cache_capacity),
                cache_ttl_ms: a.cache_ttl_ms.or(cfg.cache_ttl_ms),
                template: a.template.clone().or(cfg.template.clone()),
                profiles_seed: a.profiles_seed.clone(),
                store_questions: a.store_questions,
            };
            chat(&opts, stdin, stdout, stderr)?;
            Ok(0)
        }
        Command::Bench(a) => {
            let mut config = crate::bench::BenchConfig::new(a.kind, a.n, a.dim, a.k, a.seed);
            config.queries = a.queries;
            config.hnsw = a.params.hnsw(a.seed);
            config.ivf = a.params.ivf(a.n, a.seed);
            bench(&config, stdout)?;
            Ok(0)
        }
    }
}
