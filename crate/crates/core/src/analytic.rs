//! Closed-form averages and the FCFS queue stationary law.
//!
//! The raw rational expressions live in [`closed_form`] and take `(a, b) =
//! (lambda1, lambda2)` without checks; the `avg_*` wrappers validate the
//! domain first.

use serde::{Deserialize, Serialize};

use crate::error::{AnalyticError, ParamError};
use crate::model::{check_probability, Metric, ScenarioParams, ScenarioTag};
use crate::pattern::{QueuePattern, MAX_HEAD_AGE};

/// `lambda2 - lambda1` below this makes the FCFS AoAI expression ill-conditioned.
pub const NEAR_INSTABILITY_GAP: f64 = 1e-6;

pub mod closed_form {
    /// Mean AoA of the single-packet buffer with a controller.
    pub fn aoa_buffer_controller(a: f64, b: f64) -> f64 {
        ((b - 1.0) * (a * a + a * b) - b * b) / (a * b * (a * (b - 1.0) - b))
    }

    /// Mean AoA of the single-packet buffer with a one-unit battery.
    pub fn aoa_buffer_battery(a: f64, b: f64) -> f64 {
        let bm = b - 1.0;
        let num = a.powi(4) * bm.powi(3)
            - 2.0 * a.powi(3) * b * bm * bm
            - a * a * b * b * (2.0 * b * b - 3.0 * b + 1.0)
            + a * b.powi(3) * (3.0 * b - 2.0)
            - b.powi(4);
        let den = a * b * (a * bm - b) * (a * a * bm * bm + a * (-2.0 * b * b + b) + b * b);
        num / den
    }

    /// Mean AoAI of the FCFS queue; finite only for `a != b`.
    pub fn aoai_fcfs(a: f64, b: f64) -> f64 {
        (a * a * (b - 1.0) * (a - b) + b.powi(3) * (a - 1.0)) / (a * (a - b) * b * b)
    }

    /// Mean AoAI when the freshest packet is always actuated first (LCFS
    /// queue and single-packet buffer with a controller).
    pub fn aoai_freshest_first(a: f64, b: f64) -> f64 {
        1.0 / a + 1.0 / b - 1.0
    }

    /// Mean AoAI of the single-packet buffer with a one-unit battery.
    pub fn aoai_buffer_battery(a: f64, b: f64) -> f64 {
        let bm = b - 1.0;
        let num = a.powi(4) * (b - 4.0) * bm.powi(3) * b - 4.0 * a.powi(3) * bm.powi(3) * b * b
            + a * (3.0 - 4.0 * b) * b.powi(4)
            + b.powi(5)
            + a.powi(5) * bm.powi(3) * (2.0 * b - 1.0)
            + 2.0 * a * a * b.powi(3) * (2.0 - 5.0 * b + 3.0 * b * b);
        let s = a + b - a * b;
        let den = a * b * s * s * (a * a * bm * bm + b * b + a * (b - 2.0 * b * b));
        num / den
    }
}

/// Joint one-slot event probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    /// arrival and opportunity
    pub w: f64,
    /// arrival only
    pub x: f64,
    /// opportunity only
    pub y: f64,
    /// neither
    pub z: f64,
}

impl RateConstants {
    pub fn new(lambda1: f64, lambda2: f64) -> Self {
        let (n1, n2) = (1.0 - lambda1, 1.0 - lambda2);
        Self {
            w: lambda1 * lambda2,
            x: lambda1 * n2,
            y: n1 * lambda2,
            z: n1 * n2,
        }
    }

    pub fn sum(&self) -> f64 {
        self.w + self.x + self.y + self.z
    }
}

pub fn avg_aoi(lambda1: f64) -> Result<f64, ParamError> {
    Ok(1.0 / check_probability("lambda1", lambda1)?)
}

pub fn avg_aoa(params: &ScenarioParams) -> Result<f64, ParamError> {
    params.validate()?;
    let (a, b) = (params.lambda1, params.lambda2);
    Ok(match params.scenario {
        ScenarioTag::InfFcfs | ScenarioTag::InfLcfs => (1.0 / a).max(1.0 / b),
        ScenarioTag::BufferController => closed_form::aoa_buffer_controller(a, b),
        ScenarioTag::BufferBattery => closed_form::aoa_buffer_battery(a, b),
    })
}

pub fn avg_aoai(params: &ScenarioParams) -> Result<f64, AnalyticError> {
    params.validate()?;
    let (a, b) = (params.lambda1, params.lambda2);
    Ok(match params.scenario {
        ScenarioTag::InfFcfs => {
            if !params.is_stable() {
                return Err(AnalyticError::Unstable {
                    lambda1: a,
                    lambda2: b,
                });
            }
            closed_form::aoai_fcfs(a, b)
        }
        ScenarioTag::InfLcfs | ScenarioTag::BufferController => {
            closed_form::aoai_freshest_first(a, b)
        }
        ScenarioTag::BufferBattery => closed_form::aoai_buffer_battery(a, b),
    })
}

/// A closed-form value plus its conditioning flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub value: f64,
    /// The FCFS AoAI expression was evaluated with `lambda2 - lambda1` below
    /// [`NEAR_INSTABILITY_GAP`], where its `(lambda1 - lambda2)` denominator
    /// amplifies rounding.
    pub near_instability: bool,
}

/// Evaluates the closed form of `metric` for `params`.
pub fn evaluate(params: &ScenarioParams, metric: Metric) -> Result<Evaluation, AnalyticError> {
    let value = match metric {
        Metric::Aoi => {
            params.validate()?;
            avg_aoi(params.lambda1)?
        }
        Metric::Aoa => avg_aoa(params)?,
        Metric::Aoai => avg_aoai(params)?,
    };
    let near_instability = metric == Metric::Aoai
        && params.scenario == ScenarioTag::InfFcfs
        && params.lambda2 - params.lambda1 < NEAR_INSTABILITY_GAP;
    Ok(Evaluation {
        value,
        near_instability,
    })
}

fn check_stable(lambda1: f64, lambda2: f64) -> Result<(), AnalyticError> {
    check_probability("lambda1", lambda1)?;
    check_probability("lambda2", lambda2)?;
    if lambda1 >= lambda2 {
        return Err(AnalyticError::Unstable { lambda1, lambda2 });
    }
    Ok(())
}

/// Stationary probability that the Geo/Geo/1 queue holds `i` packets.
pub fn queue_length_dist(lambda1: f64, lambda2: f64, i: u32) -> Result<f64, AnalyticError> {
    Ok(QueueLaw::new(lambda1, lambda2)?.d(i))
}

/// Constants of the stable FCFS queue's stationary law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueueLaw {
    pub lambda1: f64,
    pub lambda2: f64,
    pub rates: RateConstants,
    /// Geometric ratio `x / y` of the queue-length law.
    pub ratio: f64,
    gamma1: f64,
}

impl QueueLaw {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self, AnalyticError> {
        check_stable(lambda1, lambda2)?;
        let rates = RateConstants::new(lambda1, lambda2);
        let ratio = rates.x / rates.y;
        let mut law = Self {
            lambda1,
            lambda2,
            rates,
            ratio,
            gamma1: 0.0,
        };
        let RateConstants { w, x, y, z } = rates;
        law.gamma1 = (x * law.d(0) + w * z * law.d(1) + w * y * law.d(2)) / (1.0 - w);
        Ok(law)
    }

    /// `D_i = (x/y)^i (1 - x/y)`.
    pub fn d(&self, i: u32) -> f64 {
        self.ratio.powi(i as i32) * (1.0 - self.ratio)
    }

    /// `f_i = x D_i + w D_{i+1}`.
    pub fn f(&self, i: u32) -> f64 {
        self.rates.x * self.d(i) + self.rates.w * self.d(i + 1)
    }

    /// Probability of the single-packet pattern with head age 1.
    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    /// Probability of the empty queue.
    pub fn gamma_empty(&self) -> f64 {
        self.d(0)
    }

    /// Stationary probability of any one pattern with head age `h` and
    /// length `l`.
    pub fn gamma(&self, h: u32, l: u32) -> Result<f64, AnalyticError> {
        if h == 0 || l == 0 || l > h {
            return Err(AnalyticError::Pattern(format!(
                "need 1 <= l <= h, got h = {h}, l = {l}"
            )));
        }
        if h > MAX_HEAD_AGE {
            return Err(AnalyticError::HeadAgeTooLarge(h));
        }
        let RateConstants { w, x, y, z } = self.rates;
        let (hl, l1) = ((h - l) as i32, (l - 1) as i32);
        let mut terms = Vec::with_capacity(((l1 + 1) * (hl + 1)) as usize + 1);
        terms.push(x.powi(l1) * z.powi(hl) * self.gamma1);
        for i in 1..=l1 {
            for j in 0..=hl {
                terms.push(
                    binomial(l1 as u32, i as u32)
                        * binomial(hl as u32, j as u32)
                        * w.powi(i)
                        * x.powi(l1 - i)
                        * y.powi(j)
                        * z.powi(hl - j)
                        * self.f((i + j) as u32),
                );
            }
        }
        for j in 1..=hl {
            terms.push(
                binomial(hl as u32, j as u32)
                    * x.powi(l1)
                    * y.powi(j)
                    * z.powi(hl - j)
                    * self.f(j as u32),
            );
        }
        Ok(sum_by_magnitude(terms))
    }

    /// Total probability of head age `h`, summed pattern by pattern.
    pub fn gamma_level(&self, h: u32) -> Result<f64, AnalyticError> {
        if h == 0 {
            return Err(AnalyticError::Pattern("head age must be at least 1".into()));
        }
        let mut terms = Vec::with_capacity(h as usize);
        for l in 1..=h {
            terms.push(binomial(h - 1, l - 1) * self.gamma(h, l)?);
        }
        Ok(sum_by_magnitude(terms))
    }

    /// Total probability of head age `h` from the level recursion.
    pub fn gamma_level_closed(&self, h: u32) -> Result<f64, AnalyticError> {
        if h == 0 {
            return Err(AnalyticError::Pattern("head age must be at least 1".into()));
        }
        if h > MAX_HEAD_AGE {
            return Err(AnalyticError::HeadAgeTooLarge(h));
        }
        let (b, nb) = (self.lambda2, 1.0 - self.lambda2);
        let n = (h - 1) as i32;
        let mut terms = vec![nb.powi(n) * self.gamma1];
        for j in 1..=n {
            terms
                .push(binomial(n as u32, j as u32) * b.powi(j) * nb.powi(n - j) * self.f(j as u32));
        }
        Ok(sum_by_magnitude(terms))
    }
}

/// Stationary probability of `pattern`. Depends on the pattern only through
/// its head age and length.
pub fn gamma_state_prob(
    pattern: QueuePattern,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64, AnalyticError> {
    let law = QueueLaw::new(lambda1, lambda2)?;
    if pattern.is_empty() {
        return Ok(law.gamma_empty());
    }
    law.gamma(pattern.h(), pattern.l())
}

pub fn gamma_level_prob(h: u32, lambda1: f64, lambda2: f64) -> Result<f64, AnalyticError> {
    QueueLaw::new(lambda1, lambda2)?.gamma_level(h)
}

pub fn gamma_level_prob_closed(h: u32, lambda1: f64, lambda2: f64) -> Result<f64, AnalyticError> {
    QueueLaw::new(lambda1, lambda2)?.gamma_level_closed(h)
}

/// Exact binomial coefficient as a float; exact in u128 for `n <= 64`.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k) as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n as u128 - i) / (i + 1);
    }
    c as f64
}

fn sum_by_magnitude(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    terms.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: ScenarioTag, a: f64, b: f64) -> ScenarioParams {
        ScenarioParams::new(s, a, b).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn aoi_values() {
        assert_eq!(avg_aoi(0.5).unwrap(), 2.0);
        assert_eq!(avg_aoi(0.25).unwrap(), 4.0);
        assert!(avg_aoi(1.0).is_err());
        assert!(avg_aoi(0.0).is_err());
    }

    #[test]
    fn aoa_values() {
        assert_eq!(avg_aoa(&p(ScenarioTag::InfFcfs, 0.2, 0.5)).unwrap(), 5.0);
        assert!(close(
            avg_aoa(&p(ScenarioTag::InfLcfs, 0.6, 0.3)).unwrap(),
            1.0 / 0.3,
            1e-15
        ));
        // regression values cross-checked against simulation and the chain oracle
        assert!(close(
            avg_aoa(&p(ScenarioTag::BufferController, 0.3, 0.5)).unwrap(),
            3.794871794871795,
            1e-12
        ));
        assert!(close(
            avg_aoa(&p(ScenarioTag::BufferBattery, 0.3, 0.5)).unwrap(),
            3.350270524582451,
            1e-12
        ));
    }

    #[test]
    fn aoai_values() {
        assert_eq!(
            avg_aoai(&p(ScenarioTag::BufferController, 0.5, 0.5)).unwrap(),
            3.0
        );
        assert!(close(
            avg_aoai(&p(ScenarioTag::InfLcfs, 0.2, 0.7)).unwrap(),
            5.0 + 1.0 / 0.7 - 1.0,
            1e-15
        ));
        assert!(close(
            avg_aoai(&p(ScenarioTag::InfFcfs, 0.3, 0.6)).unwrap(),
            13.0 / 3.0,
            1e-12
        ));
        assert!(close(
            avg_aoai(&p(ScenarioTag::InfFcfs, 0.2, 0.5)).unwrap(),
            6.266666666666667,
            1e-12
        ));
        assert!(close(
            avg_aoai(&p(ScenarioTag::BufferBattery, 0.3, 0.5)).unwrap(),
            3.5189910066409706,
            1e-12
        ));
        assert!(matches!(
            avg_aoai(&p(ScenarioTag::InfFcfs, 0.5, 0.5)),
            Err(AnalyticError::Unstable { .. })
        ));
    }

    #[test]
    fn near_instability_is_flagged() {
        let e = evaluate(&p(ScenarioTag::InfFcfs, 0.5, 0.5 + 1e-7), Metric::Aoai).unwrap();
        assert!(e.near_instability);
        let e = evaluate(&p(ScenarioTag::InfFcfs, 0.3, 0.6), Metric::Aoai).unwrap();
        assert!(!e.near_instability);
    }

    #[test]
    fn queue_length_law() {
        let law = QueueLaw::new(0.2, 0.5).unwrap();
        assert!(close(law.d(0), 0.75, 1e-15));
        assert!(close(
            queue_length_dist(0.2, 0.5, 2).unwrap(),
            0.046875,
            1e-14
        ));
        let total: f64 = (0..1000)
            .map(|i| queue_length_dist(0.3, 0.4, i).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(queue_length_dist(0.5, 0.4, 0).is_err());
    }

    #[test]
    fn gamma_base_cases() {
        let law = QueueLaw::new(0.2, 0.5).unwrap();
        assert_eq!(law.gamma(1, 1).unwrap(), law.gamma1());
        let RateConstants { z, y, x, w } = law.rates;
        assert!(close(
            law.gamma(2, 1).unwrap(),
            z * law.gamma1() + y * law.f(1),
            1e-15
        ));
        assert!(close(
            law.gamma(2, 2).unwrap(),
            x * law.gamma1() + w * law.f(1),
            1e-15
        ));
        let a = gamma_state_prob("101".parse().unwrap(), 0.2, 0.5).unwrap();
        let b = gamma_state_prob("110".parse().unwrap(), 0.2, 0.5).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            gamma_state_prob(QueuePattern::EMPTY, 0.2, 0.5).unwrap(),
            0.75
        );
        assert!(law.gamma(2, 3).is_err());
        assert!(matches!(
            law.gamma(65, 1),
            Err(AnalyticError::HeadAgeTooLarge(65))
        ));
    }

    #[test]
    fn level_sum_matches_closed_form() {
        let law = QueueLaw::new(0.2, 0.5).unwrap();
        assert_eq!(law.gamma_level(1).unwrap(), law.gamma1());
        for h in 1..=20 {
            let a = law.gamma_level(h).unwrap();
            let b = law.gamma_level_closed(h).unwrap();
            assert!((a - b).abs() < 1e-12, "h = {h}: {a} vs {b}");
        }
    }

    #[test]
    fn levels_and_empty_queue_normalize() {
        let law = QueueLaw::new(0.2, 0.5).unwrap();
        let mut total = law.gamma_empty();
        let mut last = 0.0;
        for h in 1..=64 {
            last = law.gamma_level_closed(h).unwrap();
            total += last;
        }
        // geometric tail estimate beyond h = 64
        let prev = law.gamma_level_closed(63).unwrap();
        let r = last / prev;
        let tail = last * r / (1.0 - r);
        assert!(
            (total - 1.0).abs() <= tail + 1e-12,
            "total {total}, tail {tail}"
        );
    }

    #[test]
    fn battery_aoa_can_fall_below_aoi() {
        // delayed actuations make the inter-actuation times more regular than
        // the geometric inter-arrival times
        let q = p(ScenarioTag::BufferBattery, 0.1, 0.3);
        assert!(avg_aoa(&q).unwrap() < 0.99 * avg_aoi(0.1).unwrap());
        let q = p(ScenarioTag::BufferBattery, 0.5, 0.3);
        assert!(avg_aoa(&q).unwrap() > avg_aoi(0.5).unwrap());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(64, 32), 1832624140942590534.0);
        assert_eq!(binomial(3, 4), 0.0);
    }

    #[test]
    fn rate_constants_sum_to_one() {
        for i in 1..20 {
            for j in 1..20 {
                let r = RateConstants::new(i as f64 / 20.0, j as f64 / 20.0);
                assert!((r.sum() - 1.0).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn ordering_holds(a in 0.01f64..0.99, b in 0.01f64..0.99) {
            for s in [ScenarioTag::BufferController, ScenarioTag::BufferBattery] {
                let q = p(s, a, b);
                let (i, aa, ai) = (avg_aoi(a).unwrap(), avg_aoa(&q).unwrap(), avg_aoai(&q).unwrap());
                prop_assert!(ai >= aa * (1.0 - 1e-12), "{s}: aoai {ai} < aoa {aa}");
                prop_assert!(ai >= i * (1.0 - 1e-12), "{s}: aoai {ai} < aoi {i}");
            }
            let q = p(ScenarioTag::BufferController, a, b);
            prop_assert!(avg_aoa(&q).unwrap() >= avg_aoi(a).unwrap() * (1.0 - 1e-12));
            if a < b {
                let q = p(ScenarioTag::InfFcfs, a, b);
                let ai = avg_aoai(&q).unwrap();
                prop_assert_eq!(avg_aoa(&q).unwrap(), avg_aoi(a).unwrap());
                prop_assert!(ai >= avg_aoa(&q).unwrap() * (1.0 - 1e-12));
            }
            prop_assert_eq!(
                avg_aoai(&p(ScenarioTag::InfLcfs, a, b)).unwrap(),
                avg_aoai(&p(ScenarioTag::BufferController, a, b)).unwrap()
            );
        }
    }
}
