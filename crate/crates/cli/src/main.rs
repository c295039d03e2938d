use std::path::PathBuf;
use std::process::ExitCode;

use aidecide::config::RunConfig;
use aidecide::config::{parse_direction, parse_kind};
use aidecide::{render, run, CliError, Command};
use aidecide_core::preference::Comparison;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aidecide", version, about = "Evaluate human, AI-assisted and AI-alone decisions from a randomized experiment")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Agreement tables and identified risk differences between the human and human+AI systems.
    Evaluate(Common),
    /// Bounds comparing the AI-alone system with each human system.
    Bounds(Common),
    /// Preferred system as a function of the false positive loss.
    Prefer(Common),
    /// Monotone policies over the risk-score lattice.
    LearnPolicy(Common),
    /// Draw a synthetic population and a trial sample from it.
    Simulate(Common),
    /// Check the closed-form estimators and bounds against exact oracles.
    OracleCheck(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Case file (CSV with z, d, a, y, x_* and optional score columns).
    #[arg(long)]
    input: Option<PathBuf>,
    /// TOML configuration, or a JSON report whose config is replayed.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plain-text rendering of the report.
    #[arg(long)]
    text: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// False positive loss; repeat for several.
    #[arg(long = "l01")]
    l01: Vec<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// human_vs_humanAI, ai_vs_human or ai_vs_humanAI; repeatable.
    #[arg(long)]
    comparison: Vec<String>,
    /// Declared subgroup to analyse; repeatable.
    #[arg(long)]
    subgroup: Vec<String>,
    /// increasing or decreasing; repeatable.
    #[arg(long)]
    direction: Vec<String>,
    /// provision or follow; repeatable.
    #[arg(long)]
    kind: Vec<String>,
    /// Number of random populations for oracle-check.
    #[arg(long)]
    populations: Option<usize>,
    /// Population file for oracle-check.
    #[arg(long)]
    population: Option<PathBuf>,
    /// Sample size for simulate.
    #[arg(long)]
    n: Option<usize>,
    /// Include wall-clock timings in the report.
    #[arg(long)]
    timings: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.input {
            cfg.input = Some(p.clone());
        }
        if let Some(p) = &self.out {
            cfg.output = Some(p.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if !self.l01.is_empty() {
            cfg.l01 = self.l01.clone();
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if !self.comparison.is_empty() {
            cfg.comparisons = self
                .comparison
                .iter()
                .map(|c| Comparison::parse(c).map_err(|e| CliError::config(e.to_string())))
                .collect::<Result<_, _>>()?;
        }
        if !self.subgroup.is_empty() {
            cfg.subgroups = self.subgroup.clone();
        }
        if !self.direction.is_empty() {
            cfg.policy.directions = self.direction.iter().map(|d| parse_direction(d)).collect::<Result<_, _>>()?;
        }
        if !self.kind.is_empty() {
            cfg.policy.kinds = self.kind.iter().map(|k| parse_kind(k)).collect::<Result<_, _>>()?;
        }
        if let Some(n) = self.populations {
            cfg.oracle.populations = n;
        }
        if let Some(p) = &self.population {
            cfg.oracle.population = Some(p.clone());
        }
        if let Some(n) = self.n {
            cfg.simulate.dgp.n = n;
        }
        Ok(cfg)
    }
}

fn execute(command: Command, args: &Common) -> Result<(), CliError> {
    let report = run(command, args.config()?, args.timings)?;
    let json = report.to_json();
    match &report.config.output {
        Some(p) => std::fs::write(p, &json).map_err(|e| CliError::io(p, e))?,
        None => print!("{json}"),
    }
    if let Some(p) = &args.text {
        std::fs::write(p, render::render(&report)).map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::Evaluate(a) => (Command::Evaluate, a),
        Cmd::Bounds(a) => (Command::Bounds, a),
        Cmd::Prefer(a) => (Command::Prefer, a),
        Cmd::LearnPolicy(a) => (Command::LearnPolicy, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::OracleCheck(a) => (Command::OracleCheck, a),
    };
    match execute(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aidecide {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
