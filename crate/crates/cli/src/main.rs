//! `bregman-vi` command-line driver.
//!
//! Exit codes: 0 success, 1 input error, 2 non-convergence, 3 property or
//! certificate violation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use bregman_vi::{RadiusRule, StageOutput};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "bregman-vi",
    version,
    about = "Mirror prox solvers for variational inequalities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run adaptive mirror prox and write trace.csv, trace.json and summary.json.
    Solve(SolveArgs),
    /// Run the restarted method and write trace.csv and restart.json.
    Restart(RestartArgs),
    /// Sample the inexactness, monotonicity and smoothness conditions.
    CheckOracle(CheckArgs),
    /// Replay a saved trace against the convergence guarantees.
    Certify(CertifyArgs),
    /// Run independent solves on a worker pool and write bench.csv.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    /// Problem file (JSON), or the name of a bundled problem.
    #[arg(long)]
    pub problem: String,
    /// Inexactness level; overrides the file's `delta`.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Seed for the reference solution and the oracle noise; overrides the file's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Target accuracy.
    #[arg(long)]
    pub epsilon: f64,
    /// Initial guess for the smoothness constant (default: the declared L).
    #[arg(long)]
    pub l0: Option<f64>,
    /// Output directory for artifacts.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Sample count for the `minty_gap_sampled` trace column.
    #[arg(long, default_value_t = bregman_vi::report::TRACE_GAP_SAMPLES)]
    pub samples: usize,
    /// Cap on outer iterations (per stage for restarts).
    #[arg(long)]
    pub max_outer_iters: Option<usize>,
    /// Cap on doubling trials per line search.
    #[arg(long)]
    pub max_linesearch_iters: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopModeArg {
    /// Stop once `S_N ≥ max V(x, z_0)/ε`.
    EpsilonTarget,
    /// Stop once `S_N ≥ --threshold`.
    SumThreshold,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value = "epsilon-target")]
    pub stop_mode: StopModeArg,
    /// Threshold for `--stop-mode sum-threshold`.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusRuleArg {
    PaperExplicit,
    RecursiveHalving,
}

impl From<RadiusRuleArg> for RadiusRule {
    fn from(r: RadiusRuleArg) -> Self {
        match r {
            RadiusRuleArg::PaperExplicit => RadiusRule::PaperExplicit,
            RadiusRuleArg::RecursiveHalving => RadiusRule::RecursiveHalving,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutputArg {
    LastW,
    AveragedW,
}

impl From<StageOutputArg> for StageOutput {
    fn from(s: StageOutputArg) -> Self {
        match s {
            StageOutputArg::LastW => StageOutput::LastW,
            StageOutputArg::AveragedW => StageOutput::AveragedW,
        }
    }
}

#[derive(Args, Debug)]
pub struct RestartArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value = "recursive-halving")]
    pub radius_rule: RadiusRuleArg,
    /// Bound on `V(x_*, x_0)` (default: max of `V(x, x_0)` over the set).
    #[arg(long)]
    pub r0_sq: Option<f64>,
    /// Point of each stage passed on as the next center.
    #[arg(long, value_enum, default_value = "last-w")]
    pub stage_output: StageOutputArg,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Samples per checker.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Also write the reports to `<out-dir>/oracle_report.json`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// `trace.json` written by `solve` or `restart.json` written by `restart`.
    #[arg(long)]
    pub trace: PathBuf,
    /// Grid spacing for the Minty gap (sets of intrinsic dimension ≤ 3).
    #[arg(long, default_value_t = 1e-2)]
    pub grid: f64,
    /// Sample count for the Minty gap on larger sets.
    #[arg(long, default_value_t = bregman_vi::certify::DEFAULT_GAP_SAMPLES)]
    pub samples: usize,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Problem files or bundled names (default: every bundled problem).
    #[arg(long = "problem")]
    pub problems: Vec<String>,
    /// Target accuracies.
    #[arg(long = "epsilon", default_values_t = vec![1e-2, 1e-3])]
    pub epsilons: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                commands::EXIT_INPUT
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Restart(a) => commands::restart(&a),
        Command::CheckOracle(a) => commands::check_oracle(&a),
        Command::Certify(a) => commands::certify(&a),
        Command::Bench(a) => commands::bench(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
