//! Shared inputs for the benchmarks.

use age_metrics_core::{ScenarioParams, ScenarioTag};

/// One moderately loaded operating point per scenario.
pub fn operating_points() -> Vec<ScenarioParams> {
    ScenarioTag::ALL
        .into_iter()
        .map(|s| ScenarioParams::new(s, 0.3, 0.5).expect("valid rates"))
        .collect()
}
