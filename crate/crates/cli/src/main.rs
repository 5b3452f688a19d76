//! `pcp`: command-line front end for the positive-correlation tests.

mod commands;
mod config;
mod figures;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{LearnerArg, RunConfig, StatisticArg};
use output::{sha256_hex, Manifest, Output};
use pcp_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "pcp",
    version,
    about = "Tests of the positive correlation between insurance coverage and claims"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: pcp-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    learner: Option<LearnerArg>,
    /// Restrict to one statistic; both when omitted.
    #[arg(long, global = true, value_enum)]
    statistic: Option<StatisticArg>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Draw a synthetic dataset with its ground truth.
    Simulate,
    /// Grid search for the selected learner.
    Hyperopt,
    /// Train the configured learner on a train/validation/test split.
    Fit,
    /// Raw and cross-fitted statistics, summaries, figure data, group estimates.
    Estimate,
    /// Intersection test per grouping scheme and level.
    TestIntersection,
    /// Sorted-groups test over repeated sample splits.
    TestSorted,
    /// Leave-one-feature-out and impurity importance for all learners.
    Importance,
    /// Collect the text tables of earlier runs in the output directory.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Hyperopt => "hyperopt",
            Command::Fit => "fit",
            Command::Estimate => "estimate",
            Command::TestIntersection => "test-intersection",
            Command::TestSorted => "test-sorted",
            Command::Importance => "importance",
            Command::Report => "report",
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
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if let Some(l) = cli.learner {
        cfg.learner = l;
    }
    if cli.statistic.is_some() {
        cfg.statistic = cli.statistic;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<PathBuf> {
    let cfg = effective_config(cli)?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("pcp-out"));
    let mut out = Output::create(&dir)?;
    let command = cli.command;
    let config_text = cfg.to_toml()?;
    let result = (|| -> Result<()> {
        if !matches!(command, Command::Report) {
            out.write(&format!("{}.config.toml", command.name()), config_text.as_bytes())?;
        }
        match command {
            Command::Simulate => commands::simulate(&cfg, &mut out),
            Command::Hyperopt => commands::hyperopt(&cfg, &mut out),
            Command::Fit => commands::fit(&cfg, &mut out),
            Command::Estimate => commands::estimate(&cfg, &mut out),
            Command::TestIntersection => commands::test_intersection(&cfg, &mut out),
            Command::TestSorted => commands::test_sorted(&cfg, &mut out),
            Command::Importance => commands::importance(&cfg, &mut out),
            Command::Report => commands::report(&mut out),
        }
    })();
    if let Err(e) = result {
        out.discard();
        return Err(e);
    }
    let manifest = Manifest {
        tool: "pcp".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: format!("model format {}", pcp_core::learners::MODEL_VERSION),
        command: command.name().into(),
        config_fingerprint: sha256_hex(config_text.as_bytes()),
        seed: cfg.seed,
        learner: format!("{:?}", cfg.learner).to_lowercase(),
        statistic: cfg.statistic.map_or("both".into(), |s| format!("{s:?}").to_lowercase()),
        notes: Vec::new(),
        files: Vec::new(),
        timings_ms: Vec::new(),
    };
    out.finish(manifest)
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
