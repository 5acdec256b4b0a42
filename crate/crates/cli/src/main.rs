//! `cryptolect`: one binary driving the whole pipeline. Every invocation
//! is appended to the run manifest, together with digests of the files it
//! wrote.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use cryptolect::evalgen::{Framing, Task};
use cryptolect::report::{RunManifest, RunRecord};

use crate::config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "cryptolect", version, about = "In-group language induction and LLM evaluation pipeline")]
struct Cli {
    /// Run manifest; artifact paths are stored relative to its directory.
    #[arg(long, global = true, default_value = "cryptolect-manifest.json")]
    manifest: PathBuf,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read line-delimited post records into a canonical corpus.
    Ingest(IngestArgs),
    /// Per-platform corpus statistics.
    Stats(StatsArgs),
    /// Split a corpus into annual snapshots.
    Snapshot(SnapshotArgs),
    /// Train embeddings, cluster users and rank candidate words.
    Induce(InduceArgs),
    /// Build a test suite for one task.
    GenSuite(GenSuiteArgs),
    /// Send a suite to a model (or a scripted mock) and parse the replies.
    RunEval(RunEvalArgs),
    /// Write a shuffled annotation sheet of decoding definitions.
    ExportSheet(ExportSheetArgs),
    /// Read a filled annotation sheet back into judgments.
    ImportJudgments(ImportJudgmentsArgs),
    /// Compute metrics, baselines and agreement.
    Score(ScoreArgs),
    /// Build tables, figures and a summary from the manifest.
    Report(ReportArgs),
    /// Generate a synthetic corpus with planted in-group words.
    Synth(SynthArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Stats(_) => "stats",
            Command::Snapshot(_) => "snapshot",
            Command::Induce(_) => "induce",
            Command::GenSuite(_) => "gen-suite",
            Command::RunEval(_) => "run-eval",
            Command::ExportSheet(_) => "export-sheet",
            Command::ImportJudgments(_) => "import-judgments",
            Command::Score(_) => "score",
            Command::Report(_) => "report",
            Command::Synth(_) => "synth",
        }
    }
}

#[derive(Debug, Args)]
struct LengthArgs {
    #[arg(long)]
    min_chars: Option<usize>,
    #[arg(long)]
    max_chars: Option<usize>,
    /// Drop empty and one-word posts.
    #[arg(long)]
    drop_short: bool,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Field mapping (TOML or JSON); overrides the config's `[schema]`.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Platform for records without one.
    #[arg(long)]
    platform: Option<String>,
    #[command(flatten)]
    lengths: LengthArgs,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SnapshotArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Inclusive year range, e.g. `2018-2020`.
    #[arg(long)]
    years: String,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    lengths: LengthArgs,
}

#[derive(Debug, Args)]
struct InduceArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Inclusive year range, e.g. `2018-2020`.
    #[arg(long)]
    snapshots: String,
    #[arg(long, default_value_t = 3050)]
    top_n: usize,
    /// Required when the corpus holds several platforms.
    #[arg(long)]
    platform: Option<String>,
    /// Year whose word vectors are ranked; defaults to the last snapshot.
    #[arg(long)]
    rank_year: Option<i32>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Known in-group words, one per line. With it a labeled lexicon is
    /// written: listed words positive, the rest of the ranking negative.
    #[arg(long)]
    positives: Option<PathBuf>,
    /// Source recorded on labeled lexicon entries.
    #[arg(long, default_value = "expert")]
    label_source: String,
}

#[derive(Debug, Args)]
struct GenSuiteArgs {
    #[arg(long, required = true, num_args = 1..)]
    lexicon: Vec<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    task: Task,
    /// Comma-separated; defaults to every framing the task allows.
    #[arg(long, value_delimiter = ',')]
    framings: Vec<Framing>,
    /// Words per platform for decoding suites (frequency matched).
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    min_chars: Option<usize>,
    #[arg(long)]
    max_chars: Option<usize>,
}

#[derive(Debug, Args)]
struct RunEvalArgs {
    #[arg(long)]
    suite: PathBuf,
    /// Model config file, or a model named in the pipeline config.
    #[arg(long, conflicts_with = "mock", required_unless_present = "mock")]
    model: Option<String>,
    /// Scripted mock model (JSON).
    #[arg(long)]
    mock: Option<PathBuf>,
    /// Model name recorded for mock runs; defaults to the script's file stem.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    journal: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Template directory overriding the built-in prompts.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
}

#[derive(Debug, Args)]
struct ExportSheetArgs {
    #[arg(long, required = true, num_args = 1..)]
    results: Vec<PathBuf>,
    /// Needed when the results come from several models.
    #[arg(long)]
    model: Option<String>,
    /// The three framings whose definitions go on the sheet.
    #[arg(long, value_delimiter = ',', default_value = "definition,instructions,ten_examples")]
    framings: Vec<Framing>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    key: PathBuf,
}

#[derive(Debug, Args)]
struct ImportJudgmentsArgs {
    #[arg(long)]
    sheet: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long, num_args = 1..)]
    results: Vec<PathBuf>,
    /// Suites whose class balance sets the random baselines.
    #[arg(long, num_args = 1..)]
    suite: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    judgments: Vec<PathBuf>,
    /// Comma-separated substrings for the ablated variant.
    #[arg(long, value_delimiter = ',')]
    morphemes: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the metric rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Where to write the planted words, one per line, per platform.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "incels")]
    platforms: Vec<String>,
}

/// Shared state for one invocation.
pub struct Ctx {
    pub manifest: RunManifest,
    /// Directory the manifest's relative paths hang off.
    pub base: PathBuf,
    pub seed: u64,
    pub config: PipelineConfig,
    pub command: &'static str,
}

fn manifest_base(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn run(cli: &Cli, ctx: &mut Ctx) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => commands::ingest(ctx, a),
        Command::Stats(a) => commands::stats(ctx, a),
        Command::Snapshot(a) => commands::snapshot(ctx, a),
        Command::Induce(a) => commands::induce(ctx, a),
        Command::GenSuite(a) => commands::gen_suite(ctx, a),
        Command::RunEval(a) => commands::run_eval(ctx, a),
        Command::ExportSheet(a) => commands::export_sheet(ctx, a),
        Command::ImportJudgments(a) => commands::import_sheet(ctx, a),
        Command::Score(a) => commands::score(ctx, a),
        Command::Report(a) => commands::report(ctx, a),
        Command::Synth(a) => commands::synth(ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let started_at = Utc::now();
    let setup = || -> Result<Ctx> {
        Ok(Ctx {
            manifest: RunManifest::load_or_new(&cli.manifest)?,
            base: manifest_base(&cli.manifest),
            seed: cli.seed,
            config: PipelineConfig::load(cli.config.as_deref())?,
            command: cli.command.name(),
        })
    };
    let mut ctx = match setup() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(path) = &cli.config {
        if let Err(e) = ctx.manifest.record_artifact(&ctx.base, cryptolect::report::ArtifactKind::Config, path, ctx.command) {
            log::warn!("config not recorded: {e}");
        }
    }
    let outcome = run(&cli, &mut ctx);
    let status = if outcome.is_ok() { 0 } else { 1 };
    ctx.manifest.seed = Some(cli.seed);
    ctx.manifest.runs.push(RunRecord {
        command: ctx.command.to_string(),
        args: std::env::args().skip(1).collect(),
        started_at,
        finished_at: Utc::now(),
        status,
    });
    if let Err(e) = ctx.manifest.save(&cli.manifest) {
        eprintln!("error: cannot save manifest: {e}");
        return ExitCode::FAILURE;
    }
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
