//! `stosqp`: run stochastic SQP experiments from the command line.
//!
//! Settings are resolved in order: defaults, `--preset`, `--config` file,
//! `--set key=value`, then the dedicated flags.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use stosqp_core::harness::{
    cmd_complexity, cmd_coverage, cmd_normality, cmd_run, cmd_sketch_audit, list_problems,
    CommandOutput, ExperimentConfig,
};

#[derive(Parser)]
#[command(
    name = "stosqp",
    version,
    about = "Stochastic SQP with sketched Newton solves and online inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace one solver run.
    Run(Common),
    /// Normality diagnostics of the standardized iterate error.
    Normality(Common),
    /// Empirical coverage of the online confidence interval.
    Coverage(Common),
    /// Contraction audit of the sketch-and-project solver.
    SketchAudit(Common),
    /// Iteration counts to reach residual tolerances.
    Complexity(Common),
    /// List the built-in problems.
    ListProblems,
}

#[derive(Args, Default)]
struct Common {
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named settings bundle applied before the config file (`paper`, `desk`).
    #[arg(long)]
    preset: Option<String>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// CSV output path; the JSON summary goes next to it with a `.json` extension.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Explicit JSON summary path.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,

    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    sigma2: Option<String>,
    #[arg(long)]
    c1: Option<String>,
    #[arg(long)]
    c2: Option<String>,
    /// Use `inf` for `chi_t = 0`.
    #[arg(long)]
    c3: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    /// `kaczmarz`, `block:q`, `gaussian:q` or `exact`.
    #[arg(long)]
    sketch: Option<String>,
    /// `uniform`, `lower` or `midpoint`.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    stride: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    burnin: Option<String>,
    #[arg(long)]
    level: Option<String>,
    /// Direction `index:value,...` over the stacked (x, lambda).
    #[arg(long)]
    w: Option<String>,
    /// Normality mode: `within` or `mc`.
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated residual tolerances for `complexity`.
    #[arg(long)]
    epsilons: Option<String>,
    /// Comma-separated inner-step counts for `sketch-audit`.
    #[arg(long)]
    taus: Option<String>,
    /// `problem` or `random:n`.
    #[arg(long)]
    audit_source: Option<String>,
    #[arg(long)]
    mc_samples: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::default();
        if let Some(preset) = &self.preset {
            config.set("preset", preset)?;
        }
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            config
                .apply_str(&text)
                .with_context(|| format!("in {}", path.display()))?;
        }
        for entry in &self.set {
            let (key, value) = entry
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{entry}`"))?;
            config.set(key.trim(), value)?;
        }
        let flags = [
            ("problem", &self.problem),
            ("sigma2", &self.sigma2),
            ("c1", &self.c1),
            ("c2", &self.c2),
            ("c3", &self.c3),
            ("tau", &self.tau),
            ("sketch", &self.sketch),
            ("policy", &self.policy),
            ("iters", &self.iters),
            ("stride", &self.stride),
            ("seed", &self.seed),
            ("runs", &self.runs),
            ("burnin", &self.burnin),
            ("level", &self.level),
            ("w", &self.w),
            ("normality_mode", &self.mode),
            ("epsilons", &self.epsilons),
            ("audit_taus", &self.taus),
            ("audit_source", &self.audit_source),
            ("mc_samples", &self.mc_samples),
        ];
        for (key, value) in flags {
            if let Some(value) = value {
                config
                    .set(key, value)
                    .with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn emit(common: &Common, output: &CommandOutput) -> Result<()> {
    let summary_path = common
        .summary
        .clone()
        .or_else(|| common.out.as_ref().map(|p| p.with_extension("json")));
    match &common.out {
        Some(path) => write_file(path, &output.csv)?,
        None => std::io::stdout()
            .write_all(output.csv.as_bytes())
            .context("writing CSV to stdout")?,
    }
    match summary_path {
        Some(path) => write_file(&path, &output.summary_json())?,
        None => eprint!("{}", output.summary_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let (common, command): (
        &Common,
        fn(&ExperimentConfig) -> stosqp_core::Result<CommandOutput>,
    ) = match &cli.command {
        Command::ListProblems => {
            print!("{}", list_problems()?);
            return Ok(ExitCode::SUCCESS);
        }
        Command::Run(c) => (c, cmd_run),
        Command::Normality(c) => (c, cmd_normality),
        Command::Coverage(c) => (c, cmd_coverage),
        Command::SketchAudit(c) => (c, cmd_sketch_audit),
        Command::Complexity(c) => (c, cmd_complexity),
    };
    let config = common.resolve()?;
    if common.print_config {
        print!("{}", config.to_config_string());
        return Ok(ExitCode::SUCCESS);
    }
    let output = command(&config)?;
    emit(common, &output)?;
    if output.failed {
        eprintln!("error: a solver run aborted; partial results were written");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
