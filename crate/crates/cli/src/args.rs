use std::path::PathBuf;

use age_metrics_core::oracle::ChainId;
use age_metrics_core::{Metric, ScenarioTag};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "age-metrics",
    version,
    about = "Simulate, evaluate and verify AoI, AoA and AoAI in actuation systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the slot simulator and report time-average ages.
    Simulate(SimulateArgs),
    /// Evaluate the closed-form averages.
    Eval(EvalArgs),
    /// Compare closed forms, chain oracles and simulation over a grid.
    Verify(VerifyArgs),
    /// Evaluate a metric along a one-parameter grid.
    Sweep(SweepArgs),
    /// Minimise a closed form over lambda1 with lambda2 fixed.
    Optimize(OptimizeArgs),
    /// Dump a truncated chain as CSV.
    Chain(ChainArgs),
    /// Repeat a simulation from its manifest.
    Rerun(RerunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: ScenarioTag,
    #[arg(long)]
    pub l1: f64,
    #[arg(long)]
    pub l2: f64,
    /// Total slots, warmup included. Accepts `1e7`.
    #[arg(long, value_parser = parse_count, default_value = "1e6")]
    pub horizon: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Defaults to min(10^4, horizon / 10).
    #[arg(long, value_parser = parse_count)]
    pub warmup: Option<u64>,
    #[arg(long, default_value_t = age_metrics_core::simulator::DEFAULT_BATCHES)]
    pub batches: usize,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Hard cap on the queue length; defaults to the horizon for unstable queues.
    #[arg(long, value_parser = parse_count)]
    pub queue_cap: Option<u64>,
    /// Also write the first slots of the run to this CSV file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Write here instead of stdout; a `<out>.manifest.json` sidecar is written alongside.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: ScenarioTag,
    /// All metrics when omitted.
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub l1: f64,
    #[arg(long)]
    pub l2: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Check queue-pattern invariance instead of the comparison grid.
    #[arg(long, visible_alias = "queue-patterns")]
    pub theorem3: bool,
    #[arg(long, required_if_eq("theorem3", "true"))]
    pub l1: Option<f64>,
    #[arg(long, required_if_eq("theorem3", "true"))]
    pub l2: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub hmax: u32,
    /// Comma-separated scenarios; all when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_scenario)]
    pub scenarios: Vec<ScenarioTag>,
    /// Comma-separated metrics; all when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_metric)]
    pub metrics: Vec<Metric>,
    /// Grid of both rates as `start:stop:step`.
    #[arg(long, value_parser = parse_grid, default_value = "0.1:0.9:0.2")]
    pub grid: GridArg,
    /// Post-warmup slots per simulation.
    #[arg(long, value_parser = parse_count, default_value = "1e7")]
    pub slots: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub no_oracle: bool,
    #[arg(long)]
    pub no_sim: bool,
    /// Sets both the oracle slack and the relative-error tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = age_metrics_core::verify::ORACLE_TOL)]
    pub oracle_tol: f64,
    #[arg(long, default_value_t = age_metrics_core::verify::REL_TOL)]
    pub rel_tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvaluatorArg {
    Analytic,
    Simulation,
    Oracle,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: ScenarioTag,
    #[arg(long, value_parser = parse_metric)]
    pub metric: Metric,
    /// Fixed parameter, `l1=<v>` or `l2=<v>`.
    #[arg(long, value_parser = parse_fix)]
    pub fix: FixArg,
    /// Free parameter grid `start:stop:step`.
    #[arg(long, value_parser = parse_grid)]
    pub grid: GridArg,
    #[arg(long, value_enum, default_value = "analytic")]
    pub evaluator: EvaluatorArg,
    #[arg(long, value_parser = parse_count, default_value = "1e6")]
    pub horizon: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: ScenarioTag,
    #[arg(long, value_parser = parse_metric)]
    pub metric: Metric,
    /// Must fix lambda2: `l2=<v>`.
    #[arg(long, value_parser = parse_fix)]
    pub fix: FixArg,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    /// Also write the coarse scan as CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long, value_parser = parse_chain)]
    pub chain: ChainId,
    #[arg(long)]
    pub l1: f64,
    #[arg(long)]
    pub l2: f64,
    /// Truncation limits; chosen automatically when omitted.
    #[arg(long)]
    pub max_age: Option<u32>,
    #[arg(long)]
    pub max_queue: Option<u32>,
    #[arg(long)]
    pub max_head: Option<u32>,
    /// Also solve the chain and write `index,state,probability` here.
    #[arg(long)]
    pub stationary: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridArg {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixArg {
    /// 1 or 2.
    pub which: u8,
    pub value: f64,
}

fn parse_scenario(s: &str) -> Result<ScenarioTag, String> {
    s.parse()
        .map_err(|e: age_metrics_core::ParamError| e.to_string())
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse()
        .map_err(|e: age_metrics_core::ParamError| e.to_string())
}

fn parse_chain(s: &str) -> Result<ChainId, String> {
    s.parse()
        .map_err(|e: age_metrics_core::OracleError| e.to_string())
}

/// Non-negative integer, also written as `1e7` or `10_000_000`.
pub fn parse_count(s: &str) -> Result<u64, String> {
    let t = s.replace('_', "");
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = t.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if !v.is_finite() || v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
        return Err(format!("`{s}` is not a non-negative integer"));
    }
    Ok(v as u64)
}

fn parse_grid(s: &str) -> Result<GridArg, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
    match nums.as_deref() {
        Ok([start, stop, step]) => Ok(GridArg {
            start: *start,
            stop: *stop,
            step: *step,
        }),
        Ok([x]) => Ok(GridArg {
            start: *x,
            stop: *x,
            step: 1.0,
        }),
        _ => Err(format!("`{s}` is not a grid `start:stop:step`")),
    }
}

fn parse_fix(s: &str) -> Result<FixArg, String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("`{s}` is not `l1=<v>` or `l2=<v>`"))?;
    let which = match name.trim() {
        "l1" | "lambda1" => 1,
        "l2" | "lambda2" => 2,
        other => return Err(format!("unknown parameter `{other}`")),
    };
    let value = value
        .trim()
        .parse()
        .map_err(|_| format!("`{value}` is not a number"))?;
    Ok(FixArg { which, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(parse_count("1e7"), Ok(10_000_000));
        assert_eq!(parse_count("10_000"), Ok(10_000));
        assert_eq!(parse_count("2.5e1"), Ok(25));
        assert_eq!(
            parse_count("2.5").unwrap_err(),
            "`2.5` is not a non-negative integer"
        );
        assert!(parse_count("-1").is_err());
        assert!(parse_count("abc").is_err());
    }

    #[test]
    fn grids_and_fixes() {
        assert_eq!(
            parse_grid("0.02:0.48:0.02"),
            Ok(GridArg {
                start: 0.02,
                stop: 0.48,
                step: 0.02
            })
        );
        assert_eq!(
            parse_grid("0.3"),
            Ok(GridArg {
                start: 0.3,
                stop: 0.3,
                step: 1.0
            })
        );
        assert!(parse_grid("0.1:0.2").is_err());
        assert_eq!(
            parse_fix("l2=0.5"),
            Ok(FixArg {
                which: 2,
                value: 0.5
            })
        );
        assert!(parse_fix("l3=0.5").is_err());
    }
}
