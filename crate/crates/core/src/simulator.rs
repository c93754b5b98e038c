//! Seeded slot-by-slot Monte Carlo simulation of the four scenarios.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::model::{actuation_decision, AgeTriple, ScenarioParams, ScenarioTag, SlotEvents};
use crate::rng::{replication_seed, EventStream};
use crate::stats::{t_halfwidth, BatchAccumulator};

pub const DEFAULT_WARMUP: u64 = 10_000;
pub const DEFAULT_BATCHES: usize = 32;
pub const DEFAULT_QUEUE_CAP: usize = 1_000_000;
/// Traces never hold more than this many leading slots.
pub const TRACE_LIMIT: u64 = 100_000;
pub const CI_LEVEL: f64 = 0.95;

/// Packet storage. Packets are kept as generation slots; the age of a packet
/// generated in slot `g` is `n - g + 1` at the end of slot `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PacketStore {
    /// Oldest packet at the front.
    Queue(VecDeque<u64>),
    /// Single-packet buffer.
    Buffer(Option<u64>),
}

impl PacketStore {
    pub fn len(&self) -> usize {
        match self {
            PacketStore::Queue(q) => q.len(),
            PacketStore::Buffer(b) => b.is_some() as usize,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Outcome of one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub actuated: bool,
    /// End-of-slot age of the actuated packet.
    pub actuated_packet_age: Option<u64>,
}

/// Per-scenario state at the end of a slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemState {
    scenario: ScenarioTag,
    slot: u64,
    pub ages: AgeTriple,
    store: PacketStore,
    battery: bool,
    queue_cap: usize,
}

impl SystemState {
    /// Empty store, empty battery, all ages 1, at slot 0.
    pub fn initial(scenario: ScenarioTag) -> Self {
        let store = if scenario.has_unbounded_queue() {
            PacketStore::Queue(VecDeque::new())
        } else {
            PacketStore::Buffer(None)
        };
        Self {
            scenario,
            slot: 0,
            ages: AgeTriple::INITIAL,
            store,
            battery: false,
            queue_cap: DEFAULT_QUEUE_CAP,
        }
    }

    /// Builds a state from stored packet ages listed oldest first. Ages must
    /// be strictly decreasing and at least 1; a buffer holds at most one.
    pub fn from_packet_ages(
        scenario: ScenarioTag,
        packet_ages: &[u64],
        ages: AgeTriple,
        battery: bool,
    ) -> Result<Self, SimError> {
        if packet_ages.contains(&0) {
            return Err(SimError::Config("packet ages start at 1".into()));
        }
        if packet_ages.windows(2).any(|w| w[0] <= w[1]) {
            return Err(SimError::Config(
                "packet ages must be strictly decreasing, oldest first".into(),
            ));
        }
        if !scenario.has_unbounded_queue() && packet_ages.len() > 1 {
            return Err(SimError::Config(
                "a single-packet buffer holds at most one packet".into(),
            ));
        }
        if battery && !scenario.has_battery() {
            return Err(SimError::Config(
                "only the battery scenario has a battery".into(),
            ));
        }
        if battery && !packet_ages.is_empty() {
            return Err(SimError::Config(
                "a stored packet and a full battery cannot coexist".into(),
            ));
        }
        let mut state = Self::initial(scenario);
        // place the current slot far enough that every generation slot is >= 1
        let slot = packet_ages.first().copied().unwrap_or(0).max(1);
        state.slot = slot;
        let mut gens = packet_ages.iter().map(|&a| slot + 1 - a);
        state.store = match state.store {
            PacketStore::Queue(_) => PacketStore::Queue(gens.collect()),
            PacketStore::Buffer(_) => PacketStore::Buffer(gens.next_back()),
        };
        state.ages = ages;
        state.battery = battery;
        Ok(state)
    }

    pub fn with_queue_cap(mut self, cap: usize) -> Self {
        self.queue_cap = cap;
        self
    }

    pub fn scenario(&self) -> ScenarioTag {
        self.scenario
    }

    /// Index of the last completed slot.
    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn queue_len(&self) -> usize {
        self.store.len()
    }

    /// Stored packet ages at the end of the current slot, oldest first.
    pub fn packet_ages(&self) -> Vec<u64> {
        let age = |g: &u64| self.slot + 1 - g;
        match &self.store {
            PacketStore::Queue(q) => q.iter().map(age).collect(),
            PacketStore::Buffer(b) => b.iter().map(age).collect(),
        }
    }

    /// Battery level; `None` outside the battery scenario.
    pub fn battery(&self) -> Option<bool> {
        self.scenario.has_battery().then_some(self.battery)
    }

    /// Advances one slot: admits the arrival, applies the actuation rule,
    /// removes the actuated packet (head under FCFS, freshest otherwise),
    /// updates the battery and evolves the three ages.
    pub fn step(&mut self, events: SlotEvents) -> Result<StepOutcome, SimError> {
        let n = self.slot + 1;
        let nonempty_prev = !self.store.is_empty();

        match &mut self.store {
            PacketStore::Queue(q) => {
                if events.arrival {
                    if q.len() >= self.queue_cap {
                        return Err(SimError::QueueOverflow {
                            cap: self.queue_cap,
                            slot: n,
                        });
                    }
                    q.push_back(n);
                }
            }
            PacketStore::Buffer(b) => {
                if events.arrival {
                    *b = Some(n);
                }
            }
        }

        let energy = events.opportunity || (self.scenario.has_battery() && self.battery);
        let actuated = actuation_decision(nonempty_prev, SlotEvents::new(events.arrival, energy));

        let actuated_gen = if actuated {
            match (&mut self.store, self.scenario) {
                (PacketStore::Queue(q), ScenarioTag::InfFcfs) => q.pop_front(),
                (PacketStore::Queue(q), _) => q.pop_back(),
                (PacketStore::Buffer(b), _) => b.take(),
            }
        } else {
            None
        };
        debug_assert_eq!(actuated, actuated_gen.is_some());
        let actuated_packet_age = actuated_gen.map(|g| n - g + 1);

        if self.scenario.has_battery() {
            self.battery = if actuated {
                self.battery && events.opportunity
            } else {
                self.battery || events.opportunity
            };
        }

        self.ages = self.ages.advance(events.arrival, actuated_packet_age);
        self.slot = n;
        Ok(StepOutcome {
            actuated,
            actuated_packet_age,
        })
    }
}

/// One recorded slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub events: SlotEvents,
    pub actuated: bool,
    pub ages: AgeTriple,
    pub queue_len: usize,
    pub battery: Option<bool>,
}

/// Receives every simulated slot, warm-up included.
pub trait SlotObserver {
    fn observe(&mut self, record: &SlotRecord);
}

impl SlotObserver for () {
    #[inline]
    fn observe(&mut self, _record: &SlotRecord) {}
}

impl<F: FnMut(&SlotRecord)> SlotObserver for F {
    fn observe(&mut self, record: &SlotRecord) {
        self(record)
    }
}

/// Collects the first `limit` slots.
#[derive(Clone, Debug, Default)]
pub struct TraceRecorder {
    limit: u64,
    pub records: Vec<SlotRecord>,
}

impl TraceRecorder {
    pub fn new(limit: u64) -> Self {
        Self {
            limit,
            records: Vec::new(),
        }
    }
}

impl SlotObserver for TraceRecorder {
    fn observe(&mut self, record: &SlotRecord) {
        if record.slot <= self.limit {
            self.records.push(*record);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ScenarioParams,
    pub horizon: u64,
    pub warmup: u64,
    pub seed: u64,
    pub batches: usize,
    pub record_trace: bool,
    pub queue_cap: usize,
}

impl SimConfig {
    pub fn new(params: ScenarioParams, horizon: u64, seed: u64) -> Self {
        Self {
            params,
            horizon,
            warmup: DEFAULT_WARMUP.min(horizon / 10),
            seed,
            batches: DEFAULT_BATCHES,
            record_trace: false,
            queue_cap: DEFAULT_QUEUE_CAP,
        }
    }

    pub fn with_warmup(mut self, warmup: u64) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn with_batches(mut self, batches: usize) -> Self {
        self.batches = batches;
        self
    }

    pub fn with_queue_cap(mut self, cap: usize) -> Self {
        self.queue_cap = cap;
        self
    }

    pub fn with_trace(mut self, on: bool) -> Self {
        self.record_trace = on;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        if self.horizon == 0 {
            return Err(SimError::Config("horizon must be positive".into()));
        }
        if self.warmup >= self.horizon {
            return Err(SimError::Config(format!(
                "warmup ({}) must be smaller than horizon ({})",
                self.warmup, self.horizon
            )));
        }
        if self.batches == 0 {
            return Err(SimError::Config("batches must be positive".into()));
        }
        if self.horizon - self.warmup < self.batches as u64 {
            return Err(SimError::Config(
                "fewer post-warmup slots than batches".into(),
            ));
        }
        Ok(())
    }

    fn batch_len(&self) -> u64 {
        (self.horizon - self.warmup) / self.batches as u64
    }
}

/// Time averages of the three ages with 95% confidence half-widths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgeStats {
    pub mean_aoi: f64,
    pub mean_aoa: f64,
    pub mean_aoai: f64,
    pub ci_aoi: f64,
    pub ci_aoa: f64,
    pub ci_aoai: f64,
    pub actuation_rate: f64,
    pub slots_counted: u64,
    /// Unbounded queue run without `lambda1 < lambda2`.
    pub nonstationary: bool,
}

impl AgeStats {
    pub fn mean(&self, metric: crate::model::Metric) -> f64 {
        use crate::model::Metric::*;
        match metric {
            Aoi => self.mean_aoi,
            Aoa => self.mean_aoa,
            Aoai => self.mean_aoai,
        }
    }

    pub fn ci(&self, metric: crate::model::Metric) -> f64 {
        use crate::model::Metric::*;
        match metric {
            Aoi => self.ci_aoi,
            Aoa => self.ci_aoa,
            Aoai => self.ci_aoai,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub stats: AgeStats,
    pub trace: Option<Vec<SlotRecord>>,
}

/// Runs `config.horizon` slots and averages over the post-warmup slots that
/// fill `config.batches` equal batches.
pub fn simulate(config: &SimConfig) -> Result<SimOutput, SimError> {
    if config.record_trace {
        let mut recorder = TraceRecorder::new(TRACE_LIMIT.min(config.horizon));
        let stats = simulate_with(config, &mut recorder)?;
        Ok(SimOutput {
            stats,
            trace: Some(recorder.records),
        })
    } else {
        Ok(SimOutput {
            stats: simulate_with(config, &mut ())?,
            trace: None,
        })
    }
}

/// Like [`simulate`], handing every slot to `observer`.
pub fn simulate_with<O: SlotObserver + ?Sized>(
    config: &SimConfig,
    observer: &mut O,
) -> Result<AgeStats, SimError> {
    config.validate()?;
    let params = config.params;
    let mut events = EventStream::new(config.seed, params.lambda1, params.lambda2);
    let mut state = SystemState::initial(params.scenario).with_queue_cap(config.queue_cap);

    let batch_len = config.batch_len();
    let counted = batch_len * config.batches as u64;
    let last = config.warmup + counted;
    let mut aoi = BatchAccumulator::new(batch_len, config.batches);
    let mut aoa = BatchAccumulator::new(batch_len, config.batches);
    let mut aoai = BatchAccumulator::new(batch_len, config.batches);
    let mut actuations = 0u64;

    for n in 1..=config.horizon {
        let ev = events.next_events();
        let outcome = state.step(ev)?;
        observer.observe(&SlotRecord {
            slot: n,
            events: ev,
            actuated: outcome.actuated,
            ages: state.ages,
            queue_len: state.queue_len(),
            battery: state.battery(),
        });
        if n > config.warmup && n <= last {
            aoi.push(state.ages.aoi);
            aoa.push(state.ages.aoa);
            aoai.push(state.ages.aoai);
            actuations += outcome.actuated as u64;
        }
    }

    Ok(AgeStats {
        mean_aoi: aoi.mean(),
        mean_aoa: aoa.mean(),
        mean_aoai: aoai.mean(),
        ci_aoi: aoi.halfwidth(CI_LEVEL),
        ci_aoa: aoa.halfwidth(CI_LEVEL),
        ci_aoai: aoai.halfwidth(CI_LEVEL),
        actuation_rate: actuations as f64 / counted as f64,
        slots_counted: counted,
        nonstationary: params.is_nonstationary(),
    })
}

/// Independent replications with seeds derived from `config.seed`. Means are
/// pooled and the half-widths come from the spread of replication means.
/// Results do not depend on the order in which replications finish.
pub fn replicate(config: &SimConfig, n_reps: usize) -> Result<AgeStats, SimError> {
    if n_reps == 0 {
        return Err(SimError::Config("n_reps must be at least 1".into()));
    }
    config.validate()?;
    if n_reps == 1 {
        return simulate_with(config, &mut ());
    }
    let runs: Vec<AgeStats> = (0..n_reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut cfg = config.clone();
            cfg.seed = replication_seed(config.seed, r);
            cfg.record_trace = false;
            simulate_with(&cfg, &mut ())
        })
        .collect::<Result<_, _>>()?;

    let pooled = |f: fn(&AgeStats) -> f64| -> (f64, f64) {
        let xs: Vec<f64> = runs.iter().map(f).collect();
        (
            xs.iter().sum::<f64>() / xs.len() as f64,
            t_halfwidth(&xs, CI_LEVEL),
        )
    };
    let (mean_aoi, ci_aoi) = pooled(|s| s.mean_aoi);
    let (mean_aoa, ci_aoa) = pooled(|s| s.mean_aoa);
    let (mean_aoai, ci_aoai) = pooled(|s| s.mean_aoai);
    let (actuation_rate, _) = pooled(|s| s.actuation_rate);
    Ok(AgeStats {
        mean_aoi,
        mean_aoa,
        mean_aoai,
        ci_aoi,
        ci_aoa,
        ci_aoai,
        actuation_rate,
        slots_counted: runs.iter().map(|s| s.slots_counted).sum(),
        nonstationary: config.params.is_nonstationary(),
    })
}
