mod commands;
mod config;
mod fail;
mod stats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{TargetArgs, ABLATION_VARIANTS};
use config::Settings;
use fail::Failure;

/// Attention-based evolutionary operators: archive generation,
/// pre-training, optimization, ablation and inspection.
#[derive(Parser, Debug)]
#[command(name = "okaem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Seed for every random choice of the command.
    #[arg(long)]
    seed: Option<u64>,
    /// Flat key=value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Independent runs, each with a seed derived from --seed.
    #[arg(long)]
    runs: Option<usize>,
    /// Override any config key, e.g. --set lr=0.001 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug, Clone)]
struct Target {
    /// Suite entry such as STOP1.
    #[arg(long)]
    suite: Option<String>,
    /// Instance descriptor written by `generate`.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Single benchmark family with an optimum drawn from the instance seed.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
}

impl From<Target> for TargetArgs {
    fn from(t: Target) -> Self {
        TargetArgs {
            suite: t.suite,
            instance: t.instance,
            family: t.family,
            dim: t.dim,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a source optimizer on every source task and write an archive.
    Generate {
        #[command(flatten)]
        target: Target,
        /// ga or pso.
        #[arg(long)]
        optimizer: Option<String>,
        #[arg(long)]
        pop_size: Option<usize>,
        /// Recorded generations per source task.
        #[arg(long)]
        generations: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Pre-train the operators on an archive.
    Pretrain {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Optimize a target; without --params the operators start from scratch.
    Optimize {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Output directory for run logs and best solutions.
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare model variants on one target.
    Ablate {
        #[command(flatten)]
        target: Target,
        /// Pre-train each variant on this archive before optimizing.
        #[arg(long)]
        archive: Option<PathBuf>,
        /// Comma-separated subset of full, crossover_only, mutation_only, no_selftune.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Dump selection and mutation matrices on archived populations.
    Inspect {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        archive: PathBuf,
        /// Source task whose first and last populations are used.
        #[arg(long, default_value_t = 0)]
        task: usize,
        /// Output directory.
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Median and IQR table over run logs.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn settings(common: &Common, extra: &[(&str, Option<String>)]) -> Result<Settings, Failure> {
    let mut s = Settings::load(common.config.as_deref())?;
    for pair in &common.set {
        s.set_pair(pair)?;
    }
    s.set_opt("seed", common.seed)?;
    s.set_opt("runs", common.runs)?;
    for (k, v) in extra {
        s.set_opt(k, v.as_ref())?;
    }
    Ok(s)
}

fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(T::to_string)
}

fn execute(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Generate {
            target,
            optimizer,
            pop_size,
            generations,
            out,
            common,
        } => {
            let s = settings(
                &common,
                &[
                    ("optimizer", optimizer),
                    ("pop_size", opt(&pop_size)),
                    ("source_generations", opt(&generations)),
                ],
            )?;
            commands::generate(&target.into(), &s, &out)
        }
        Command::Pretrain {
            archive,
            epochs,
            out,
            common,
        } => {
            let s = settings(&common, &[("epochs", opt(&epochs))])?;
            commands::pretrain_cmd(&archive, &s, &out)
        }
        Command::Optimize {
            target,
            params,
            out,
            common,
        } => {
            let s = settings(&common, &[])?;
            commands::optimize(&target.into(), params.as_deref(), &s, &out)
        }
        Command::Ablate {
            target,
            archive,
            variants,
            out,
            common,
        } => {
            let s = settings(&common, &[])?;
            let variants: Vec<String> = if variants.is_empty() {
                ABLATION_VARIANTS.iter().map(|v| v.to_string()).collect()
            } else {
                variants
            };
            if let Some(bad) = variants
                .iter()
                .find(|v| !ABLATION_VARIANTS.contains(&v.as_str()))
            {
                return Err(Failure::usage(format!("unknown variant {bad:?}")));
            }
            commands::ablate(&target.into(), archive.as_deref(), &variants, &s, &out)
        }
        Command::Inspect {
            params,
            archive,
            task,
            out,
            common,
        } => {
            let s = settings(&common, &[])?;
            commands::inspect(&params, &archive, task, &s, &out)
        }
        Command::Report { logs, out } => commands::report(&logs, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
