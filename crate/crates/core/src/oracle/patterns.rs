//! Stationary law of FCFS queue patterns.

use std::collections::BTreeMap;

use super::solve::marginal;
use super::{build_chain, stationary, ChainId, ChainSpec, Coordinate, Limits, StationaryResult};
use super::{DEFAULT_MAX_ITERS, DEFAULT_TOL, MAX_PATTERN_HEAD};
use crate::error::OracleError;
use crate::model::{ScenarioParams, ScenarioTag};
use crate::pattern::QueuePattern;

#[derive(Clone, Debug, PartialEq)]
pub struct PatternLaw {
    pub h_max: u32,
    /// Every pattern with head age at most `h_max`, plus the empty queue.
    pub probabilities: BTreeMap<QueuePattern, f64>,
    /// Queue-length law the patterns were derived from.
    pub queue_length: Vec<f64>,
}

impl PatternLaw {
    pub fn get(&self, p: QueuePattern) -> Option<f64> {
        self.probabilities.get(&p).copied()
    }

    /// Total probability of head age `h`.
    pub fn level(&self, h: u32) -> f64 {
        self.probabilities
            .iter()
            .filter(|(p, _)| p.h() == h)
            .map(|(_, v)| v)
            .sum()
    }
}

/// Probabilities of every queue pattern with head age `<= h_max`.
///
/// A pattern with head age `h` at the end of slot `n` requires the head to
/// arrive in slot `n - h + 1` and every packet older than it to be actuated
/// by slot `n`. Conditioning on the queue length `k` at the end of slot
/// `n - h` (drawn from the numerically solved queue-length chain), the FCFS
/// dynamics are propagated over the `h` slots of the window for every event
/// sequence, tracking the older backlog and the presence bits of packets
/// that arrived inside the window.
pub fn queue_pattern_stationary(
    params: &ScenarioParams,
    h_max: u32,
) -> Result<PatternLaw, OracleError> {
    if h_max == 0 || h_max > MAX_PATTERN_HEAD {
        return Err(OracleError::Limits(format!(
            "h_max must be in 1..={MAX_PATTERN_HEAD}, got {h_max}"
        )));
    }
    let params = params.with_scenario(ScenarioTag::InfFcfs);
    let limits = Limits::auto(ChainId::QueueLength, &params);
    let spec = build_chain(ChainId::QueueLength, &params, &limits)?;
    let result = stationary(&spec, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
    let queue_length = marginal(&spec, &result, Coordinate::Queue);

    let mut probabilities = BTreeMap::new();
    probabilities.insert(QueuePattern::EMPTY, queue_length[0]);
    for h in 1..=h_max {
        for (mask, p) in window_patterns(params.lambda1, params.lambda2, h, &queue_length) {
            probabilities.insert(QueuePattern::from_mask(mask), p);
        }
    }
    Ok(PatternLaw {
        h_max,
        probabilities,
        queue_length,
    })
}

fn window_patterns(a: f64, b: f64, h: u32, queue_length: &[f64]) -> Vec<(u64, f64)> {
    let h = h as usize;
    let width = 1usize << h;
    let slot = |k: usize, mask: usize| (k << h) | mask;
    let mut cur = vec![0.0; (h + 1) * width];
    for (k, &d) in queue_length.iter().enumerate().take(h + 1) {
        cur[slot(k, 0)] = d;
    }
    let mut next = vec![0.0; cur.len()];
    for t in 1..=h {
        next.iter_mut().for_each(|v| *v = 0.0);
        let head_bit = 1usize << (t - 1);
        let remaining = h - t;
        for k in 0..=h {
            for mask in 0..(1usize << (t - 1)) {
                let p = cur[slot(k, mask)];
                if p == 0.0 {
                    continue;
                }
                for arr in [true, false] {
                    // the head must arrive in the first slot of the window
                    if t == 1 && !arr {
                        continue;
                    }
                    for opp in [true, false] {
                        let q = p * if arr { a } else { 1.0 - a } * if opp { b } else { 1.0 - b };
                        let shifted = (mask << 1) | arr as usize;
                        let mut k2 = k;
                        if opp && (k2 > 0 || shifted != 0) {
                            if k2 > 0 {
                                k2 -= 1;
                            } else {
                                // oldest window packet is the head: it must survive
                                continue;
                            }
                        }
                        if k2 > remaining {
                            continue;
                        }
                        debug_assert!(shifted & head_bit != 0);
                        next[slot(k2, shifted)] += q;
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    (0..width)
        .filter(|m| m & (1 << (h - 1)) != 0)
        .map(|m| (m as u64, cur[slot(0, m)]))
        .collect()
}

/// Pattern marginal of a chain carrying the pattern coordinate.
pub fn pattern_marginal(
    spec: &ChainSpec,
    result: &StationaryResult,
) -> BTreeMap<QueuePattern, f64> {
    let mut out = BTreeMap::new();
    for (s, p) in spec.states.iter().zip(&result.probabilities) {
        *out.entry(QueuePattern::from_mask(s.pattern)).or_insert(0.0) += p;
    }
    out
}

/// Queue-length marginal of a chain that carries the queue length or the
/// queue pattern.
pub fn queue_length_marginal(spec: &ChainSpec, result: &StationaryResult) -> Option<Vec<f64>> {
    let coords = spec.id.coordinates();
    if coords.contains(&Coordinate::Queue) {
        return Some(marginal(spec, result, Coordinate::Queue));
    }
    if coords.contains(&Coordinate::Pattern) {
        let mut m = vec![0.0; 65];
        for (s, p) in spec.states.iter().zip(&result.probabilities) {
            m[s.pattern.count_ones() as usize] += p;
        }
        while m.len() > 1 && m[m.len() - 1] == 0.0 {
            m.pop();
        }
        return Some(m);
    }
    None
}
