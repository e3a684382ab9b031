use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use debias_core::app::{cmd_generate, cmd_report, cmd_run, cmd_stats, stage_status, RunConfig, Stage};
use debias_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "debias",
    version,
    about = "Bias injection and generative debiasing of a synthetic retinal classifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Flat `key = value` config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the dataset (PGM images and manifest.csv).
    Generate {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Run pipeline stages in a run directory.
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// Comma-separated subset of generate,baseline,generator,debias-ra,debias-dr,evaluate, or `all`.
        #[arg(long, default_value = "all")]
        stages: String,
    },
    /// Fairness report and ROC plots from a prediction CSV (id,group,actual,score,predicted).
    Stats {
        predictions: PathBuf,
        /// Directory for the JSON report and SVG plots; prints JSON only when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// System name recorded in the report.
        #[arg(long, default_value = "System")]
        system: String,
    },
    /// Print the results table of a run directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(args: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.pipeline.master_seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    let out = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory: pass --out or set `out` in the config".into()))?;
    Ok((cfg, out))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { args } => {
            let (cfg, out) = resolve(&args)?;
            let rows = cmd_generate(&cfg, &out)?;
            println!("wrote {} samples to {}", rows.len(), out.display());
        }
        Command::Run { args, stages } => {
            let (cfg, out) = resolve(&args)?;
            let stages = Stage::parse_list(&stages)?;
            let manifest = cmd_run(&cfg, &out, &stages)?;
            for (stage, done) in stage_status(&manifest) {
                println!("{:<10} {}", stage.name(), if done { "done" } else { "-" });
            }
            if manifest.reports.contains_key("results") {
                print!("{}", cmd_report(&out)?);
            }
        }
        Command::Stats {
            predictions,
            out,
            system,
        } => {
            let report = cmd_stats(&read(&predictions)?, &system, out.as_deref())?;
            print!("{}", report.to_json());
        }
        Command::Report { out } => print!("{}", cmd_report(&out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
