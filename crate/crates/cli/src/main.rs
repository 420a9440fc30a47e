mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use ideaspace::index::PoolingMode;
use ideaspace::novelty::CentralityView;
use ideaspace::provider::ProviderMode;

use crate::config::RunConfig;

/// Sub-space paper retrieval and idea novelty pipeline.
#[derive(Debug, Parser)]
#[command(name = "ideaspace", version, about)]
struct Cli {
    /// TOML run configuration; flags win over file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; each stage derives its own.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Human-readable tables instead of JSON lines.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a corpus and write its normalized export.
    Ingest(IngestArgs),
    /// Mine candidate pairs, classify them and build training batches.
    MinePairs(MineArgs),
    /// Validate sub-space embeddings and write them in canonical order.
    ImportEmbeddings(ImportArgs),
    /// Build and save the five databases.
    BuildIndex(BuildArgs),
    /// Top-K retrieval for one query, or run files for many.
    Search(SearchArgs),
    /// Score idea novelty against the index.
    Assess(AssessArgs),
    /// Retrieval metrics and novelty correlations.
    Evaluate(EvaluateArgs),
    /// Positive/negative similarity margins per sub-space.
    MarginStats(MarginArgs),
    /// Combine artifacts into a single report.
    ExportReport(ReportArgs),
}

#[derive(Debug, Args)]
struct ProviderArgs {
    /// Fixture file for replay/record modes.
    #[arg(long)]
    fixture: Option<PathBuf>,
    #[arg(long, value_enum)]
    provider_mode: Option<ModeArg>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Replay,
    Record,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MineArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    window_years: Option<u32>,
    #[arg(long)]
    coupling_min: Option<usize>,
    #[arg(long)]
    cocite_min: Option<usize>,
    #[arg(long)]
    accept_threshold: Option<f64>,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Debug, Args)]
struct ImportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Reject vectors for papers missing from this corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    index: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    /// problem, method, findings, p2m, m2k or pooled.
    #[arg(long, default_value = "pooled")]
    db: String,
    #[arg(long, conflicts_with = "query_ids")]
    query_id: Option<String>,
    /// File with one query id per line; writes a run file to --out.
    #[arg(long, requires = "out")]
    query_ids: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    pooling: Option<PoolingArg>,
    /// Keep the query paper in its own results.
    #[arg(long)]
    include_self: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PoolingArg {
    RoundRobin,
    MaxSimilarity,
}

#[derive(Debug, Args)]
struct AssessArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long, conflicts_with = "ideas")]
    idea: Option<String>,
    /// Line-delimited `{idea_id, text}` records.
    #[arg(long)]
    ideas: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    view: Option<ViewArg>,
    /// Corpus used to show evidence titles with --pretty.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ViewArg {
    Undirected,
    Directed,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, requires = "gt")]
    run: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Comma-separated K values.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long, requires = "expert")]
    predicted: Option<PathBuf>,
    #[arg(long)]
    expert: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MarginArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    /// Directory holding `batches-<dimension>.jsonl` from mine-pairs.
    #[arg(long)]
    mined: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long, required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: ReportFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Markdown,
}

impl ProviderArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = &self.fixture {
            cfg.provider.fixture_path = Some(p.clone());
        }
        if let Some(m) = self.provider_mode {
            cfg.provider.mode = match m {
                ModeArg::Live => ProviderMode::Live,
                ModeArg::Replay => ProviderMode::Replay,
                ModeArg::Record => ProviderMode::Record,
            };
        }
        if let Some(m) = &self.model {
            cfg.provider.model_name = m.clone();
        }
        if let Some(e) = &self.endpoint {
            cfg.provider.endpoint = e.clone();
        }
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    match &cli.command {
        Command::Ingest(a) => set_path(&mut cfg.corpus, &a.corpus),
        Command::MinePairs(a) => {
            set_path(&mut cfg.corpus, &a.corpus);
            let m = &mut cfg.mining;
            m.window_years = a.window_years.unwrap_or(m.window_years);
            m.coupling_min = a.coupling_min.unwrap_or(m.coupling_min);
            m.cocite_min = a.cocite_min.unwrap_or(m.cocite_min);
            m.accept_threshold = a.accept_threshold.unwrap_or(m.accept_threshold);
            a.provider.apply(&mut cfg);
        }
        Command::ImportEmbeddings(a) => set_path(&mut cfg.corpus, &a.corpus),
        Command::BuildIndex(a) => set_path(&mut cfg.index, &a.index),
        Command::Search(a) => {
            set_path(&mut cfg.index, &a.index);
            if let Some(k) = a.k {
                cfg.retrieval.ks = vec![k];
            }
            if let Some(p) = a.pooling {
                cfg.retrieval.pooling = match p {
                    PoolingArg::RoundRobin => PoolingMode::RoundRobin,
                    PoolingArg::MaxSimilarity => PoolingMode::MaxSimilarity,
                };
            }
        }
        Command::Assess(a) => {
            set_path(&mut cfg.index, &a.index);
            set_path(&mut cfg.corpus, &a.corpus);
            cfg.novelty.k = a.k.unwrap_or(cfg.novelty.k);
            if let Some(v) = a.view {
                cfg.novelty.view = match v {
                    ViewArg::Undirected => CentralityView::Undirected,
                    ViewArg::Directed => CentralityView::Directed,
                };
            }
            a.provider.apply(&mut cfg);
        }
        Command::Evaluate(a) => {
            if let Some(ks) = &a.k {
                cfg.retrieval.ks = ks.clone();
            }
        }
        Command::MarginStats(a) => {
            set_path(&mut cfg.index, &a.index);
            cfg.loss.tau = a.tau.unwrap_or(cfg.loss.tau);
            cfg.loss.gamma = a.gamma.unwrap_or(cfg.loss.gamma);
        }
        Command::ExportReport(_) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn set_path(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli)?;
    let ctx = commands::Context::new(cfg, cli.pretty)?;
    match &cli.command {
        Command::Ingest(a) => commands::ingest(&ctx, a.output.as_deref()),
        Command::MinePairs(a) => commands::mine_pairs(&ctx, &a.out_dir),
        Command::ImportEmbeddings(a) => commands::import_embeddings(&ctx, &a.input, &a.output),
        Command::BuildIndex(a) => commands::build_index(&ctx, &a.embeddings),
        Command::Search(a) => commands::search(
            &ctx,
            &commands::SearchRequest {
                db: &a.db,
                query_id: a.query_id.as_deref(),
                query_ids: a.query_ids.as_deref(),
                include_self: a.include_self,
                out: a.out.as_deref(),
            },
        ),
        Command::Assess(a) => commands::assess(&ctx, a.idea.as_deref(), a.ideas.as_deref(), a.out.as_deref()),
        Command::Evaluate(a) => commands::evaluate(
            &ctx,
            a.run.as_deref().zip(a.gt.as_deref()),
            a.predicted.as_deref().zip(a.expert.as_deref()),
            a.out.as_deref(),
        ),
        Command::MarginStats(a) => commands::margin_stats(&ctx, &a.mined, a.out.as_deref()),
        Command::ExportReport(a) => commands::export_report(&ctx, &a.inputs, &a.out, a.format == ReportFormat::Markdown),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
