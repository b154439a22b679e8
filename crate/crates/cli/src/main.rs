use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use bpc_core::backend::{BackendConfig, BackendKind};
use bpc_core::controller::SearchConfig;
use bpc_core::dataset::{dataset_stats, load_dataset};
use bpc_core::harness::{compare_runs, run_eval, summarize, Method, RunConfig};
use bpc_core::path::HistoryBound;
use bpc_core::synth::{generate, write_scripts, AmbiguityMode, SynthSpec};

#[derive(Parser)]
#[command(
    name = "bpc",
    version,
    about = "Bounded path context KGQA runs and diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) an evaluation over a dataset split.
    Run(RunArgs),
    /// Summarize a row file, optionally reconstructing cost from segments.
    Summarize {
        #[arg(long)]
        rows: PathBuf,
        /// Checkpoint segment whose costs should be summed (repeatable).
        #[arg(long = "extra-segment")]
        extra_segments: Vec<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write the summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired comparison of two row files (deltas are a - b).
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Depth limit used by both runs, for the depth-limit fraction.
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dataset statistics: size, mean gold count, single-answer fraction.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Generate a synthetic split and its oracle scripts.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Bpc,
    Random,
    Cot,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Remote,
    Random,
    Scripted,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum AmbiguityArg {
    None,
    RepeatedEntity,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "bpc")]
    method: MethodArg,
    /// Visible history bound: a hop count or "full".
    #[arg(long, default_value = "full")]
    k: HistoryBound,
    #[arg(long, default_value_t = 5)]
    depth: usize,
    #[arg(long, default_value_t = 3)]
    width: usize,
    #[arg(long, default_value_t = 16)]
    beams: usize,
    #[arg(long, default_value_t = 50)]
    relation_cap: usize,
    #[arg(long, default_value_t = 8)]
    extraction_budget: usize,
    #[arg(long, value_enum, default_value = "remote")]
    backend: BackendArg,
    /// Chat-completions base URL, e.g. http://localhost:8000/v1
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Canned replies (scripted) or synthetic oracle scripts (oracle).
    #[arg(long)]
    script: Option<PathBuf>,
    /// Environment variable holding the API token.
    #[arg(long, default_value = "BPC_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value_t = 120.0)]
    timeout_secs: f64,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    /// Flag prompts longer than this many characters.
    #[arg(long)]
    max_prompt_chars: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    resume: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 50)]
    summary_interval: usize,
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 3)]
    branching: usize,
    #[arg(long, default_value_t = 2)]
    fanout: usize,
    #[arg(long, value_enum, default_value = "none")]
    ambiguity: AmbiguityArg,
    /// Output directory for dataset.jsonl and scripts.jsonl.
    #[arg(long)]
    out: PathBuf,
}

fn run_config(args: RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::new(args.dataset, args.out);
    cfg.method = match args.method {
        MethodArg::Bpc => Method::Bpc,
        MethodArg::Random => Method::Random,
        MethodArg::Cot => Method::Cot,
    };
    cfg.search = SearchConfig {
        depth_limit: args.depth,
        width: args.width,
        beam_budget: args.beams,
        relation_cap: args.relation_cap,
        history_bound: args.k,
        extraction_budget: args.extraction_budget,
    };
    cfg.backend = BackendConfig {
        kind: match args.backend {
            BackendArg::Remote => BackendKind::RemoteChat,
            BackendArg::Random => BackendKind::Random,
            BackendArg::Scripted => BackendKind::Scripted,
            BackendArg::Oracle => BackendKind::Oracle,
        },
        endpoint: args.endpoint,
        model_name: args.model,
        seed: args.seed,
        request_timeout: Duration::try_from_secs_f64(args.timeout_secs)
            .context("invalid --timeout-secs")?,
        max_retries: args.retries,
        api_key_env: args.api_key_env,
        max_prompt_chars: args.max_prompt_chars,
        script_path: args.script,
        ..BackendConfig::default()
    };
    cfg.seed = args.seed;
    cfg.limit = args.limit;
    cfg.resume = args.resume;
    cfg.workers = args.workers;
    cfg.summary_interval = args.summary_interval;
    Ok(cfg)
}

fn emit(value: &impl serde::Serialize, out: Option<PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => {
            fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = run_config(args)?;
            let summary = run_eval(&cfg)?;
            emit(&summary, None)?;
        }
        Command::Summarize {
            rows,
            extra_segments,
            seed,
            out,
        } => emit(&summarize(&rows, &extra_segments, seed)?, out)?,
        Command::Compare {
            a,
            b,
            depth,
            seed,
            out,
        } => emit(&compare_runs(&a, &b, depth, seed)?, out)?,
        Command::Stats { dataset } => {
            let records = load_dataset(&dataset)?;
            emit(&dataset_stats(&records), None)?;
        }
        Command::Synth(args) => {
            let spec = SynthSpec {
                seed: args.seed,
                example_count: args.count,
                plant_depth: args.depth,
                branching: args.branching,
                tail_fanout: args.fanout,
                ambiguity: match args.ambiguity {
                    AmbiguityArg::None => AmbiguityMode::None,
                    AmbiguityArg::RepeatedEntity => AmbiguityMode::RepeatedEntity,
                },
            };
            let (examples, scripts) = generate(&spec)?;
            fs::create_dir_all(&args.out)?;
            let dataset = args.out.join("dataset.jsonl");
            let mut text = String::new();
            for e in &examples {
                text.push_str(&e.to_json_line());
                text.push('\n');
            }
            fs::write(&dataset, text).with_context(|| format!("writing {}", dataset.display()))?;
            write_scripts(&args.out.join("scripts.jsonl"), &scripts)?;
            eprintln!(
                "wrote {} examples to {}",
                examples.len(),
                args.out.display()
            );
        }
    }
    Ok(())
}
