//! Power iteration and moments of the truncated chains.

use serde::{Deserialize, Serialize};

use super::{ChainSpec, Coordinate};
use crate::error::OracleError;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITERS: usize = 200_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryResult {
    /// Indexed like `ChainSpec::states`; sums to 1.
    pub probabilities: Vec<f64>,
    /// `|| pi P / |pi P| - pi ||_1` at the last iteration.
    pub residual: f64,
    /// Mass that leaves the truncated space in one slot from `pi`.
    pub leaked_mass: f64,
    pub iterations: usize,
}

/// Stationary law of the truncated chain by renormalized power iteration,
/// started from the uniform distribution.
pub fn stationary(
    spec: &ChainSpec,
    tol: f64,
    max_iters: usize,
) -> Result<StationaryResult, OracleError> {
    let n = spec.len();
    if n == 0 {
        return Err(OracleError::Limits("chain has no states".into()));
    }
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut leaked = 0.0;
    for it in 1..=max_iters {
        next.iter_mut().for_each(|v| *v = 0.0);
        for t in &spec.transitions {
            next[t.col as usize] += pi[t.row as usize] * t.p;
        }
        let total: f64 = next.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(OracleError::Limits(
                "all mass leaked out of the truncated chain".into(),
            ));
        }
        leaked = 1.0 - total;
        residual = 0.0;
        for (nv, pv) in next.iter_mut().zip(&pi) {
            *nv /= total;
            residual += (*nv - pv).abs();
        }
        std::mem::swap(&mut pi, &mut next);
        if residual < tol {
            return Ok(StationaryResult {
                probabilities: pi,
                residual,
                leaked_mass: leaked.max(0.0),
                iterations: it,
            });
        }
    }
    let _ = leaked;
    Err(OracleError::NotConverged {
        iterations: max_iters,
        residual,
    })
}

/// A stationary mean plus an estimate of the mass-weighted tail cut off by
/// truncation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Geometric extrapolation of `sum_{k > M} k p_k` from the last two
    /// levels of the coordinate's marginal.
    pub tail_bound: f64,
    pub leaked_mass: f64,
}

/// Marginal of an integer coordinate, indexed by value.
pub fn marginal(spec: &ChainSpec, result: &StationaryResult, c: Coordinate) -> Vec<f64> {
    let max = spec
        .states
        .iter()
        .map(|s| s.coordinate(c) as usize)
        .max()
        .unwrap_or(0);
    let mut m = vec![0.0; max + 1];
    for (s, p) in spec.states.iter().zip(&result.probabilities) {
        m[s.coordinate(c) as usize] += p;
    }
    m
}

pub fn mean_age(spec: &ChainSpec, result: &StationaryResult, c: Coordinate) -> MeanEstimate {
    let mean = spec
        .states
        .iter()
        .zip(&result.probabilities)
        .map(|(s, p)| s.coordinate(c) * p)
        .sum();
    let tail_bound = if c == Coordinate::Pattern {
        0.0
    } else {
        geometric_tail(&marginal(spec, result, c))
    };
    MeanEstimate {
        mean,
        tail_bound,
        leaked_mass: result.leaked_mass,
    }
}

/// Levels this far below the peak are dominated by solver noise and are not
/// used to estimate the decay ratio.
const RESOLVED: f64 = 1e-9;
const RATIO_SPAN: usize = 8;

fn geometric_tail(m: &[f64]) -> f64 {
    let top = m.len() - 1;
    if m[top] == 0.0 {
        return 0.0;
    }
    let (peak_at, peak) = m.iter().enumerate().fold(
        (0, 0.0),
        |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
    );
    let k0 = (peak_at..=top)
        .rev()
        .find(|&k| m[k] >= peak * RESOLVED)
        .unwrap_or(peak_at);
    let r = if k0 > peak_at {
        let span = RATIO_SPAN.min(k0 - peak_at);
        (m[k0] / m[k0 - span]).powf(1.0 / span as f64)
    } else if k0 < top {
        m[k0 + 1] / m[k0]
    } else {
        return f64::INFINITY;
    };
    if r.is_nan() || r >= 1.0 {
        return f64::INFINITY;
    }
    let pm = m[k0] * r.powi((top - k0) as i32);
    let k = top as f64;
    pm * (k * r / (1.0 - r) + r / ((1.0 - r) * (1.0 - r)))
}
