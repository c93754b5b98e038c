use thiserror::Error;

use crate::model::{Metric, ScenarioTag};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} = {value} is outside the open interval (0, 1)")]
    OutOfUnitInterval { name: &'static str, value: f64 },
    #[error(
        "unknown scenario `{0}` (expected inf-fcfs, inf-lcfs, buffer-controller or buffer-battery)"
    )]
    UnknownScenario(String),
    #[error("unknown metric `{0}` (expected aoi, aoa or aoai)")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("queue exceeded the hard cap of {cap} packets at slot {slot}")]
    QueueOverflow { cap: usize, slot: u64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("unstable: no closed form for lambda1 = {lambda1} >= lambda2 = {lambda2}")]
    Unstable { lambda1: f64, lambda2: f64 },
    #[error("invalid queue pattern: {0}")]
    Pattern(String),
    #[error("head-of-line age {0} exceeds the supported maximum of 64")]
    HeadAgeTooLarge(u32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("chain {chain} needs a stable queue (lambda1 < lambda2), got {lambda1} >= {lambda2}")]
    Unstable {
        chain: &'static str,
        lambda1: f64,
        lambda2: f64,
    },
    #[error("invalid truncation limits: {0}")]
    Limits(String),
    #[error("chain with {states} states exceeds the memory budget of {budget} states")]
    TooLarge { states: usize, budget: usize },
    #[error("power iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("no oracle chain for {metric} in scenario {scenario}")]
    NoChain {
        scenario: ScenarioTag,
        metric: Metric,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("{metric} in scenario {scenario} has no closed form on the search interval: {reason}")]
    Undefined {
        scenario: ScenarioTag,
        metric: Metric,
        reason: String,
    },
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("invalid verification config: {0}")]
    Config(String),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
