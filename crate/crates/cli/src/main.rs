//! `lansagnn`: run pipeline stages, whole runs, and sweeps from the shell.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lansagnn::pipeline::{sweep, Pipeline, PipelineError, RunConfig, Stage, StageReport, StageStatus, SweepAxis};

/// Exit code when a stage finished with unanswered requests.
const EXIT_PARTIAL: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "lansagnn", version, about = "Language-level message passing for text-attributed graphs")]
struct Cli {
    /// TOML run configuration; defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use this run directory instead of `<run_root>/<fingerprint>`.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Shorthand for `--base_seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Overrides {
    /// Config overrides such as `--k=5` or `--train.learning_rate=0.005`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load or generate the graph.
    Ingest(Overrides),
    /// Draw the train/val/test split.
    Split(Overrides),
    /// Sample up to k neighbors per node.
    Sample(Overrides),
    /// Ask the edge predictor which sampled pairs to keep.
    Filter(Overrides),
    /// Collect knowledge-base answers from training nodes.
    Kb(Overrides),
    /// Write the finetuning corpus.
    Corpus(Overrides),
    /// Extract one message per kept pair.
    Extract(Overrides),
    /// Embed node documents.
    Embed(Overrides),
    /// Train one classifier per run.
    Train(Overrides),
    /// Score the trained runs and write the report.
    Eval(Overrides),
    /// Run every stage in order.
    All(Overrides),
    /// One full run per value of a config axis.
    Sweep {
        /// `k` or `oef`.
        axis: SweepAxis,
        /// Comma-separated values, e.g. `1,3,5,inf` or `off,on`.
        values: String,
        #[command(flatten)]
        rest: Overrides,
    },
}

fn parse_overrides(raw: &[String], seed: Option<u64>) -> Result<Vec<(String, String)>, PipelineError> {
    let mut out = Vec::new();
    if let Some(s) = seed {
        out.push(("base_seed".to_owned(), s.to_string()));
    }
    for arg in raw {
        let body = arg
            .strip_prefix("--")
            .ok_or_else(|| PipelineError::config(arg, "overrides look like --key=value"))?;
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| PipelineError::config(body, "override is missing `=value`"))?;
        out.push((k.to_owned(), v.to_owned()));
    }
    Ok(out)
}

fn print_reports(reports: &[StageReport]) -> bool {
    let mut partial = false;
    for r in reports {
        println!("{r}");
        partial |= matches!(r.status, StageStatus::Partial { .. });
    }
    partial
}

fn run(cli: Cli) -> Result<bool, PipelineError> {
    let (stage, overrides) = match &cli.command {
        Command::Ingest(o) => (Some(Stage::Ingest), o),
        Command::Split(o) => (Some(Stage::Split), o),
        Command::Sample(o) => (Some(Stage::Sample), o),
        Command::Filter(o) => (Some(Stage::Filter), o),
        Command::Kb(o) => (Some(Stage::Kb), o),
        Command::Corpus(o) => (Some(Stage::Corpus), o),
        Command::Extract(o) => (Some(Stage::Extract), o),
        Command::Embed(o) => (Some(Stage::Embed), o),
        Command::Train(o) => (Some(Stage::Train), o),
        Command::Eval(o) => (Some(Stage::Eval), o),
        Command::All(o) => (None, o),
        Command::Sweep { rest, .. } => (None, rest),
    };
    let overrides = parse_overrides(&overrides.overrides, cli.seed)?;
    let config = RunConfig::load(cli.config.as_deref(), &overrides)?;

    if let Command::Sweep { axis, values, .. } = &cli.command {
        let values: Vec<String> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect();
        let result = sweep(&config, *axis, &values)?;
        for row in &result.rows {
            eprintln!("{} = {}: {}", result.axis, row.value, row.run_dir.display());
        }
        print!("{}", result.render());
        return Ok(false);
    }

    let mut pipeline = Pipeline::open(config, cli.run_dir)?;
    eprintln!("run directory: {}", pipeline.run_dir().display());
    let reports = match stage {
        Some(s) => vec![pipeline.run_stage(s)?],
        None => pipeline.run_all()?,
    };
    let partial = print_reports(&reports);
    if stage.is_none() || stage == Some(Stage::Eval) {
        let table = std::fs::read_to_string(pipeline.stage_dir(Stage::Eval).join("report.txt"))?;
        print!("\n{table}");
    }
    eprintln!("backend dispatches: {}", pipeline.dispatch_count());
    Ok(partial)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(EXIT_PARTIAL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
