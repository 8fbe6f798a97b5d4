use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use cfflow::config::{ExperimentConfig, Stage};
use cfflow::Pipeline;
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "cfflow", version, about = "Conditional Föllmer flow: train, sample, distill and evaluate")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set train.epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; takes precedence over CFFLOW_OUTPUT_DIR and the config.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    /// Suppress progress output.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate or load the training data and write data.csv.
    GenData,
    /// Fit the velocity network by velocity matching.
    Train,
    /// Sample with the Euler ODE solver.
    Sample,
    /// Sample with the reverse SDE.
    SampleSde,
    /// Distill a one-step generator from ODE endpoints.
    Distill,
    /// Per-condition total variation on a 2-D shape.
    EvalTv,
    /// Conditional mean/std errors on a regression model.
    EvalMoments,
    /// Prediction-interval coverage on held-out cases.
    EvalIntervals,
    /// Self-consistency checks of the closed-form oracle.
    OracleCheck,
    /// Run the stages listed in the config (or given here) in order.
    Run {
        #[arg(value_name = "STAGE")]
        stages: Vec<String>,
    },
}

fn parse_stage(name: &str) -> anyhow::Result<Stage> {
    toml::Value::String(name.to_string())
        .try_into()
        .map_err(|_| anyhow::anyhow!("unknown stage `{name}`"))
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let single = match &cli.command {
        Command::GenData => Some(Stage::GenData),
        Command::Train => Some(Stage::Train),
        Command::Sample => Some(Stage::Sample),
        Command::SampleSde => Some(Stage::SampleSde),
        Command::Distill => Some(Stage::Distill),
        Command::EvalTv => Some(Stage::EvalTv),
        Command::EvalMoments => Some(Stage::EvalMoments),
        Command::EvalIntervals => Some(Stage::EvalIntervals),
        Command::OracleCheck => Some(Stage::OracleCheck),
        Command::Run { .. } => None,
    };
    let stages = match (&cli.command, single) {
        (_, Some(s)) => Some(vec![s]),
        (Command::Run { stages }, None) if !stages.is_empty() => {
            Some(stages.iter().map(|s| parse_stage(s)).collect::<anyhow::Result<Vec<_>>>()?)
        }
        _ => None,
    };

    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = ExperimentConfig::load_with(cli.config.as_deref(), &overrides, |c| {
        if let Some(s) = &stages {
            c.stages = s.clone();
        }
        if let Some(o) = &cli.out {
            c.output_dir = o.clone();
        }
    })
    .context("invalid configuration")?;
    if cfg.stages.is_empty() {
        anyhow::bail!("no stages to run; list them under `stages` in the config or after `run`");
    }

    let stages = cfg.stages.clone();
    let mut pipeline = Pipeline::new(cfg);
    pipeline.progress = !cli.quiet;
    let manifest = pipeline.run(&stages)?;
    if !cli.quiet {
        eprintln!("wrote {}", manifest.display());
    }
    Ok(())
}
