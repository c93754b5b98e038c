//! Truncated Markov-chain oracle.
//!
//! Each chain is built by enumerating its feasible states up to the
//! truncation limits and applying the one-slot dynamics to every state.
//! Transitions that leave the truncated space are dropped; the solver
//! renormalizes and reports the leaked mass. Nothing here uses a closed form.

mod chains;
mod patterns;
mod solve;

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::OracleError;
use crate::model::{Metric, ScenarioParams, ScenarioTag};

pub use patterns::{pattern_marginal, queue_length_marginal, queue_pattern_stationary, PatternLaw};
pub use solve::{
    mean_age, stationary, MeanEstimate, StationaryResult, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};

/// Tail mass targeted by the automatic truncation limits.
pub const TAIL_TARGET: f64 = 1e-12;
/// Extra levels added on top of the geometric cut, to absorb polynomial
/// prefactors of the tails.
pub const TAIL_MARGIN: u32 = 10;
/// Largest chain the builder accepts.
pub const DEFAULT_STATE_BUDGET: usize = 4_000_000;
/// Default age cap of the full FCFS pattern chain.
pub const AOAI_INF_DEFAULT_AGE: u32 = 14;
/// Largest head age accepted by the pattern chains.
pub const MAX_PATTERN_HEAD: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainId {
    /// (A, Q) of the unbounded queue; the same under FCFS and LCFS.
    AoaInf,
    /// (A, Q) of the single-packet buffer with a controller.
    AoaBuffer,
    /// (A, Q, B) of the single-packet buffer with a battery.
    AoaBattery,
    /// (AI, I) of the single-packet buffer with a controller. The buffer is
    /// occupied exactly when AI > I.
    AoaiBuffer,
    /// (AI, I, B) of the single-packet buffer with a battery.
    AoaiBattery,
    /// (AI, queue pattern) of the FCFS queue.
    AoaiInf,
    /// (AI, head-of-line age) of the FCFS queue. Packets younger than the
    /// head arrived while it waited, so given the head age they are present
    /// independently with probability lambda1 and can be summed out.
    AoaiFcfsHead,
    /// Queue pattern of the FCFS queue alone.
    QueuePattern,
    /// Queue length of the Geo/Geo/1 queue.
    QueueLength,
}

impl ChainId {
    pub const ALL: [ChainId; 9] = [
        ChainId::AoaInf,
        ChainId::AoaBuffer,
        ChainId::AoaBattery,
        ChainId::AoaiBuffer,
        ChainId::AoaiBattery,
        ChainId::AoaiInf,
        ChainId::AoaiFcfsHead,
        ChainId::QueuePattern,
        ChainId::QueueLength,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChainId::AoaInf => "aoa-inf",
            ChainId::AoaBuffer => "aoa-buffer",
            ChainId::AoaBattery => "aoa-battery",
            ChainId::AoaiBuffer => "aoai-buffer",
            ChainId::AoaiBattery => "aoai-battery",
            ChainId::AoaiInf => "aoai-inf",
            ChainId::AoaiFcfsHead => "aoai-fcfs-head",
            ChainId::QueuePattern => "queue-pattern",
            ChainId::QueueLength => "queue-length",
        }
    }

    /// Chains of an unbounded queue have no stationary law unless
    /// `lambda1 < lambda2`.
    pub fn needs_stability(self) -> bool {
        matches!(
            self,
            ChainId::AoaInf
                | ChainId::AoaiInf
                | ChainId::AoaiFcfsHead
                | ChainId::QueuePattern
                | ChainId::QueueLength
        )
    }

    /// Coordinates carried by the chain's states.
    pub fn coordinates(self) -> &'static [Coordinate] {
        use Coordinate::*;
        match self {
            ChainId::AoaInf => &[Age, Queue],
            ChainId::AoaBuffer => &[Age, Queue],
            ChainId::AoaBattery => &[Age, Queue, Battery],
            ChainId::AoaiBuffer => &[Age, Aoi],
            ChainId::AoaiBattery => &[Age, Aoi, Battery],
            ChainId::AoaiInf => &[Age, Pattern],
            ChainId::AoaiFcfsHead => &[Age, Head],
            ChainId::QueuePattern => &[Pattern],
            ChainId::QueueLength => &[Queue],
        }
    }

    /// The chain and coordinate whose stationary mean gives `metric` in
    /// `scenario`. AoI evolves identically everywhere and is read off the
    /// buffer chains; LCFS AoAI only depends on whether the latest arrival
    /// has been actuated, which is the buffer dynamics.
    pub fn for_metric(scenario: ScenarioTag, metric: Metric) -> (ChainId, Coordinate) {
        use ScenarioTag::*;
        match (scenario, metric) {
            (BufferBattery, Metric::Aoi) => (ChainId::AoaiBattery, Coordinate::Aoi),
            (_, Metric::Aoi) => (ChainId::AoaiBuffer, Coordinate::Aoi),
            (InfFcfs | InfLcfs, Metric::Aoa) => (ChainId::AoaInf, Coordinate::Age),
            (BufferController, Metric::Aoa) => (ChainId::AoaBuffer, Coordinate::Age),
            (BufferBattery, Metric::Aoa) => (ChainId::AoaBattery, Coordinate::Age),
            (InfFcfs, Metric::Aoai) => (ChainId::AoaiFcfsHead, Coordinate::Age),
            (InfLcfs | BufferController, Metric::Aoai) => (ChainId::AoaiBuffer, Coordinate::Age),
            (BufferBattery, Metric::Aoai) => (ChainId::AoaiBattery, Coordinate::Age),
        }
    }
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChainId {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChainId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| OracleError::Limits(format!("unknown chain `{s}`")))
    }
}

/// A state coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coordinate {
    /// AoA or AoAI, whichever the chain tracks.
    Age,
    Aoi,
    Queue,
    Head,
    Battery,
    Pattern,
}

/// State of any chain; coordinates a chain does not carry are zero.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct ChainState {
    pub age: u32,
    pub aoi: u32,
    pub queue: u32,
    pub head: u32,
    pub battery: bool,
    pub pattern: u64,
}

impl ChainState {
    pub fn coordinate(&self, c: Coordinate) -> f64 {
        match c {
            Coordinate::Age => self.age as f64,
            Coordinate::Aoi => self.aoi as f64,
            Coordinate::Queue => self.queue as f64,
            Coordinate::Head => self.head as f64,
            Coordinate::Battery => self.battery as u8 as f64,
            Coordinate::Pattern => self.pattern as f64,
        }
    }

    fn label(&self, id: ChainId) -> String {
        id.coordinates()
            .iter()
            .map(|c| match c {
                Coordinate::Age => format!("age={}", self.age),
                Coordinate::Aoi => format!("aoi={}", self.aoi),
                Coordinate::Queue => format!("queue={}", self.queue),
                Coordinate::Head => format!("head={}", self.head),
                Coordinate::Battery => format!("battery={}", self.battery as u8),
                Coordinate::Pattern => {
                    format!(
                        "pattern={}",
                        crate::pattern::QueuePattern::from_mask(self.pattern)
                    )
                }
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Truncation limits. Unused limits are ignored by a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    /// Cap on the AoA/AoAI coordinate (and on AoI, which never exceeds AoAI).
    pub max_age: u32,
    pub max_queue: u32,
    /// Cap on the head-of-line age of the pattern-only chain.
    pub max_head: u32,
    pub state_budget: usize,
}

impl Limits {
    pub fn new(max_age: u32, max_queue: u32, max_head: u32) -> Self {
        Self {
            max_age,
            max_queue,
            max_head,
            state_budget: DEFAULT_STATE_BUDGET,
        }
    }

    /// Cuts every geometric tail below [`TAIL_TARGET`]. Ages use the slowest
    /// of the per-slot survival ratios `1 - lambda1`, `1 - lambda2` and, for
    /// the FCFS queue, the waiting-time ratio `(1 - lambda2) / (1 - lambda1)`;
    /// queue lengths use `x / y`.
    pub fn auto(id: ChainId, params: &ScenarioParams) -> Self {
        let (a, b) = (params.lambda1, params.lambda2);
        let mut rho = (1.0 - a).max(1.0 - b);
        if id == ChainId::AoaiFcfsHead && a < b {
            rho = rho.max((1.0 - b) / (1.0 - a));
        }
        let max_age = match id {
            ChainId::AoaiInf => AOAI_INF_DEFAULT_AGE,
            _ => geometric_cut(rho),
        };
        let max_queue = if a < b {
            let rc = crate::analytic::RateConstants::new(a, b);
            geometric_cut(rc.x / rc.y)
        } else {
            0
        };
        Self::new(max_age, max_queue, MAX_PATTERN_HEAD)
    }
}

fn geometric_cut(ratio: f64) -> u32 {
    if ratio <= 0.0 {
        return 1 + TAIL_MARGIN;
    }
    (TAIL_TARGET.ln() / ratio.ln()).ceil().max(1.0) as u32 + TAIL_MARGIN
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub row: u32,
    pub col: u32,
    pub p: f64,
}

/// A truncated chain: states in canonical (lexicographic) order and COO
/// transitions sorted by row then column.
#[derive(Clone, Debug)]
pub struct ChainSpec {
    pub id: ChainId,
    pub params: ScenarioParams,
    pub limits: Limits,
    pub states: Vec<ChainState>,
    pub index: HashMap<ChainState, u32>,
    pub transitions: Vec<Transition>,
}

impl ChainSpec {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_index(&self, s: &ChainState) -> Option<usize> {
        self.index.get(s).map(|&i| i as usize)
    }

    /// Outgoing transitions of state `row`.
    pub fn row(&self, row: usize) -> &[Transition] {
        let lo = self.transitions.partition_point(|t| (t.row as usize) < row);
        let hi = self
            .transitions
            .partition_point(|t| (t.row as usize) <= row);
        &self.transitions[lo..hi]
    }

    /// Dense row over the truncated states, for small chains.
    pub fn dense_row(&self, row: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for t in self.row(row) {
            out[t.col as usize] += t.p;
        }
        out
    }

    /// Writes `row_state,col_state,probability` lines in row order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "row,col,from,to,probability")?;
        for t in &self.transitions {
            writeln!(
                w,
                "{},{},{},{},{:.17e}",
                t.row,
                t.col,
                self.states[t.row as usize].label(self.id),
                self.states[t.col as usize].label(self.id),
                t.p
            )?;
        }
        Ok(())
    }

    /// Writes `index,state,probability` lines in state order.
    pub fn write_stationary_csv<W: Write>(
        &self,
        result: &StationaryResult,
        mut w: W,
    ) -> io::Result<()> {
        writeln!(w, "index,state,probability")?;
        for (i, s) in self.states.iter().enumerate() {
            writeln!(
                w,
                "{},{},{:.17e}",
                i,
                s.label(self.id),
                result.probabilities[i]
            )?;
        }
        Ok(())
    }
}

/// Enumerates the feasible states of `id` within `limits` and emits the
/// one-slot transitions between them.
pub fn build_chain(
    id: ChainId,
    params: &ScenarioParams,
    limits: &Limits,
) -> Result<ChainSpec, OracleError> {
    params.validate()?;
    if id.needs_stability() && !params.is_stable() {
        return Err(OracleError::Unstable {
            chain: id.as_str(),
            lambda1: params.lambda1,
            lambda2: params.lambda2,
        });
    }
    chains::check_limits(id, limits)?;
    let count = chains::state_count(id, limits);
    if count > limits.state_budget as u128 {
        return Err(OracleError::TooLarge {
            states: count.min(usize::MAX as u128) as usize,
            budget: limits.state_budget,
        });
    }
    let mut states = chains::enumerate(id, limits);
    states.sort_unstable();
    debug_assert_eq!(states.len() as u128, count);
    let index: HashMap<ChainState, u32> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (*s, i as u32))
        .collect();

    let mut transitions = Vec::new();
    for (row, s) in states.iter().enumerate() {
        let mut out: Vec<Transition> = chains::successors(id, params, s)
            .into_iter()
            .filter_map(|(t, p)| {
                index.get(&t).map(|&col| Transition {
                    row: row as u32,
                    col,
                    p,
                })
            })
            .collect();
        out.sort_by_key(|t| t.col);
        transitions.extend(out);
    }
    Ok(ChainSpec {
        id,
        params: *params,
        limits: *limits,
        states,
        index,
        transitions,
    })
}

/// Untruncated one-slot successors of `state`, with duplicates merged.
pub fn successors(
    id: ChainId,
    params: &ScenarioParams,
    state: &ChainState,
) -> Vec<(ChainState, f64)> {
    chains::successors(id, params, state)
}

/// The initial state of every chain: empty store, empty battery, ages 1.
pub fn initial_state(id: ChainId) -> ChainState {
    chains::initial(id)
}

/// Builds and solves the chain behind `metric` and returns its stationary
/// mean. The unbounded-queue AoA and AoAI chains need stability.
pub fn oracle_mean(params: &ScenarioParams, metric: Metric) -> Result<MeanEstimate, OracleError> {
    let (id, coord) = ChainId::for_metric(params.scenario, metric);
    let limits = Limits::auto(id, params);
    let spec = build_chain(id, params, &limits)?;
    let result = stationary(&spec, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
    Ok(mean_age(&spec, &result, coord))
}

#[cfg(test)]
mod tests;
