//! Parameter sweeps and one-dimensional minimisation over lambda1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic;
use crate::error::OptimizeError;
use crate::model::{check_probability, Metric, ScenarioParams, ScenarioTag};
use crate::oracle;
use crate::simulator::{self, SimConfig};

/// Margin kept from the ends of the search interval.
pub const EDGE_MARGIN: f64 = 1e-3;
/// Points of the coarse scan that brackets the minimum.
pub const COARSE_POINTS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreeParam {
    Lambda1,
    Lambda2,
}

/// Inclusive arithmetic grid `start, start + step, ..., <= stop`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self, OptimizeError> {
        let g = Self { start, stop, step };
        g.validate()?;
        Ok(g)
    }

    /// A single point.
    pub fn point(x: f64) -> Self {
        Self {
            start: x,
            stop: x,
            step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        if !self.step.is_finite() || self.step <= 0.0 {
            return Err(OptimizeError::Grid(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if self.start.is_nan() || self.stop.is_nan() || self.start > self.stop {
            return Err(OptimizeError::Grid(format!(
                "start {} exceeds stop {}",
                self.start, self.stop
            )));
        }
        for v in [self.start, self.stop] {
            check_probability("grid value", v).map_err(|_| {
                OptimizeError::Grid(format!(
                    "grid value {v} is outside the open interval (0, 1)"
                ))
            })?;
        }
        Ok(())
    }

    /// Points computed as `start + i * step`, rounded to 12 decimals so that
    /// `0.02:0.48:0.02` yields `0.14` rather than `0.13999999999999999`.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Evaluator {
    Analytic,
    Simulation {
        horizon: u64,
        warmup: u64,
        seed: u64,
        reps: usize,
        queue_cap: usize,
    },
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub scenario: ScenarioTag,
    pub metric: Metric,
    pub free: FreeParam,
    /// Value of the parameter that is held fixed.
    pub fixed: f64,
    pub grid: Grid,
    pub evaluator: Evaluator,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        check_probability("fixed parameter", self.fixed)?;
        self.grid.validate()?;
        let needs_stability = self.scenario == ScenarioTag::InfFcfs
            && self.metric == Metric::Aoai
            && matches!(self.evaluator, Evaluator::Analytic | Evaluator::Oracle);
        if needs_stability {
            let ok = match self.free {
                FreeParam::Lambda1 => self.grid.stop < self.fixed,
                FreeParam::Lambda2 => self.grid.start > self.fixed,
            };
            if !ok {
                return Err(OptimizeError::Grid(format!(
                    "FCFS AoAI has a closed form only for lambda1 < lambda2; the grid must stay on that side of {}",
                    self.fixed
                )));
            }
        }
        Ok(())
    }

    fn params_at(&self, v: f64) -> Result<ScenarioParams, OptimizeError> {
        let (l1, l2) = match self.free {
            FreeParam::Lambda1 => (v, self.fixed),
            FreeParam::Lambda2 => (self.fixed, v),
        };
        Ok(ScenarioParams::new(self.scenario, l1, l2)?)
    }
}

/// One evaluated grid point. `value` is `None` when the evaluator failed,
/// with the reason in `error`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub param: f64,
    pub value: Option<f64>,
    /// CI half-width (simulation) or truncation tail bound (oracle).
    pub uncertainty: Option<f64>,
    pub error: Option<String>,
}

/// Evaluates the metric at every grid point, in parallel, ordered by
/// parameter.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<CurvePoint>, OptimizeError> {
    spec.validate()?;
    let points = spec.grid.points();
    Ok(points
        .par_iter()
        .map(|&v| {
            let res = spec
                .params_at(v)
                .map_err(|e| e.to_string())
                .and_then(|p| evaluate_point(&p, spec.metric, &spec.evaluator));
            match res {
                Ok((value, unc)) => CurvePoint {
                    param: v,
                    value: Some(value),
                    uncertainty: unc,
                    error: None,
                },
                Err(e) => CurvePoint {
                    param: v,
                    value: None,
                    uncertainty: None,
                    error: Some(e),
                },
            }
        })
        .collect())
}

fn evaluate_point(
    p: &ScenarioParams,
    metric: Metric,
    ev: &Evaluator,
) -> Result<(f64, Option<f64>), String> {
    match *ev {
        Evaluator::Analytic => analytic::evaluate(p, metric)
            .map(|e| (e.value, None))
            .map_err(|e| e.to_string()),
        Evaluator::Oracle => oracle::oracle_mean(p, metric)
            .map(|m| (m.mean, Some(m.tail_bound)))
            .map_err(|e| e.to_string()),
        Evaluator::Simulation {
            horizon,
            warmup,
            seed,
            reps,
            queue_cap,
        } => {
            let cfg = SimConfig::new(*p, horizon, seed)
                .with_warmup(warmup)
                .with_queue_cap(queue_cap);
            simulator::replicate(&cfg, reps.max(1))
                .map(|s| (s.mean(metric), Some(s.ci(metric))))
                .map_err(|e| e.to_string())
        }
    }
}

/// Result of [`minimize_lambda1`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimumReport {
    pub scenario: ScenarioTag,
    pub metric: Metric,
    pub lambda2: f64,
    pub lambda_star: f64,
    pub value_star: f64,
    /// Final golden-section bracket.
    pub bracket: (f64, f64),
    /// Interval that was searched.
    pub interval: (f64, f64),
    pub is_interior: bool,
    /// Coarse scan `(lambda1, value)`.
    pub curve: Vec<(f64, f64)>,
    /// For the battery AoA, `|Abar(l1*, l2) - Abar(l2, l1*)|`; reported
    /// because the surface is only roughly symmetric.
    pub symmetry_gap: Option<f64>,
}

/// Search interval for lambda1 with lambda2 fixed.
pub fn search_interval(
    scenario: ScenarioTag,
    metric: Metric,
    lambda2: f64,
) -> Result<(f64, f64), OptimizeError> {
    check_probability("lambda2", lambda2)?;
    let hi = if scenario == ScenarioTag::InfFcfs && metric == Metric::Aoai {
        lambda2 - EDGE_MARGIN
    } else {
        1.0 - EDGE_MARGIN
    };
    let lo = EDGE_MARGIN;
    if hi <= lo {
        return Err(OptimizeError::Undefined {
            scenario,
            metric,
            reason: format!("search interval ({lo}, {hi}) is empty"),
        });
    }
    Ok((lo, hi))
}

/// Minimises the closed form over lambda1: global argmin of a coarse scan,
/// then golden-section refinement of the bracket around it until its width
/// is below `tol`. No unimodality is assumed beyond the bracket.
pub fn minimize_lambda1(
    scenario: ScenarioTag,
    metric: Metric,
    lambda2: f64,
    tol: f64,
) -> Result<OptimumReport, OptimizeError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(OptimizeError::Grid(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (lo, hi) = search_interval(scenario, metric, lambda2)?;
    let f = |l1: f64| -> Result<f64, OptimizeError> {
        Ok(analytic::evaluate(&ScenarioParams::new(scenario, l1, lambda2)?, metric)?.value)
    };

    let n = COARSE_POINTS;
    let xs: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let curve: Vec<(f64, f64)> = xs
        .iter()
        .map(|&x| f(x).map(|v| (x, v)))
        .collect::<Result<_, _>>()?;
    let best = argmin(curve.iter().map(|c| c.1));
    let mut a = xs[best.saturating_sub(1)];
    let mut b = xs[(best + 1).min(n - 1)];

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let mut lambda_star = 0.5 * (a + b);
    let mut value_star = f(lambda_star)?;
    for (x, v) in [(a, f(a)?), (b, f(b)?), curve[best]] {
        if v < value_star {
            lambda_star = x;
            value_star = v;
        }
    }
    let is_interior = lambda_star - lo >= tol && hi - lambda_star >= tol;
    let symmetry_gap =
        (scenario == ScenarioTag::BufferBattery && metric == Metric::Aoa).then(|| {
            (analytic::closed_form::aoa_buffer_battery(lambda_star, lambda2)
                - analytic::closed_form::aoa_buffer_battery(lambda2, lambda_star))
            .abs()
        });
    Ok(OptimumReport {
        scenario,
        metric,
        lambda2,
        lambda_star,
        value_star,
        bracket: (a, b),
        interval: (lo, hi),
        is_interior,
        curve,
        symmetry_gap,
    })
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nonmonotonicity {
    pub detected: bool,
    /// Index of the global minimum.
    pub argmin: usize,
}

/// True iff some point lies more than `threshold` below both an earlier and
/// a later point, i.e. the curve falls and then rises again.
pub fn detect_nonmonotonicity(values: &[f64], threshold: f64) -> Nonmonotonicity {
    let n = values.len();
    let argmin = argmin(values.iter().copied());
    if n < 3 {
        return Nonmonotonicity {
            detected: false,
            argmin,
        };
    }
    let mut prefix_max = vec![f64::NEG_INFINITY; n];
    for i in 1..n {
        prefix_max[i] = prefix_max[i - 1].max(values[i - 1]);
    }
    let mut suffix_max = f64::NEG_INFINITY;
    let mut detected = false;
    for j in (1..n - 1).rev() {
        suffix_max = suffix_max.max(values[j + 1]);
        if prefix_max[j] - values[j] > threshold && suffix_max - values[j] > threshold {
            detected = true;
        }
    }
    Nonmonotonicity { detected, argmin }
}

/// Noise threshold of a simulated curve: the largest CI half-width.
pub fn noise_threshold(curve: &[CurvePoint]) -> f64 {
    curve
        .iter()
        .filter_map(|c| c.uncertainty)
        .fold(0.0, f64::max)
}

/// Argmin of `f` over a uniform grid with spacing `step`; used to check the
/// golden-section result.
pub fn dense_argmin(
    scenario: ScenarioTag,
    metric: Metric,
    lambda2: f64,
    step: f64,
) -> Result<(f64, f64), OptimizeError> {
    let (lo, hi) = search_interval(scenario, metric, lambda2)?;
    let n = ((hi - lo) / step).floor() as usize;
    let mut best = (lo, f64::INFINITY);
    for i in 0..=n {
        let x = lo + i as f64 * step;
        let v = analytic::evaluate(&ScenarioParams::new(scenario, x, lambda2)?, metric)?.value;
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}
