//! Scenario-independent domain types, the actuation rule and the per-slot
//! age updates.
//!
//! Slot convention: the arrival and opportunity events of slot `n` are
//! realized at the start of the slot, the actuation decision uses the queue
//! occupancy left at the end of slot `n - 1`, and every age is the value at
//! the end of slot `n`. A packet that arrives in slot `n` therefore has age 1
//! at the end of that slot.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// The four actuation scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioTag {
    /// Unbounded Geo/Geo/1 queue, oldest packet actuated first, controller permissions.
    InfFcfs,
    /// Unbounded Geo/Geo/1 queue, freshest packet actuated first, controller permissions.
    InfLcfs,
    /// Single-packet buffer (replace on arrival), controller permissions.
    BufferController,
    /// Single-packet buffer, actuation energy from a one-unit harvesting battery.
    BufferBattery,
}

impl ScenarioTag {
    pub const ALL: [ScenarioTag; 4] = [
        ScenarioTag::InfFcfs,
        ScenarioTag::InfLcfs,
        ScenarioTag::BufferController,
        ScenarioTag::BufferBattery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioTag::InfFcfs => "inf-fcfs",
            ScenarioTag::InfLcfs => "inf-lcfs",
            ScenarioTag::BufferController => "buffer-controller",
            ScenarioTag::BufferBattery => "buffer-battery",
        }
    }

    /// True for the two scenarios backed by an unbounded queue.
    pub fn has_unbounded_queue(self) -> bool {
        matches!(self, ScenarioTag::InfFcfs | ScenarioTag::InfLcfs)
    }

    pub fn has_battery(self) -> bool {
        self == ScenarioTag::BufferBattery
    }
}

impl fmt::Display for ScenarioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioTag {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inf-fcfs" => Ok(ScenarioTag::InfFcfs),
            "inf-lcfs" => Ok(ScenarioTag::InfLcfs),
            "buffer-controller" => Ok(ScenarioTag::BufferController),
            "buffer-battery" => Ok(ScenarioTag::BufferBattery),
            other => Err(ParamError::UnknownScenario(other.to_string())),
        }
    }
}

/// The three tracked age processes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Aoi,
    Aoa,
    Aoai,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Aoi, Metric::Aoa, Metric::Aoai];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Aoi => "aoi",
            Metric::Aoa => "aoa",
            Metric::Aoai => "aoai",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "aoi" => Ok(Metric::Aoi),
            "aoa" => Ok(Metric::Aoa),
            "aoai" => Ok(Metric::Aoai),
            other => Err(ParamError::UnknownMetric(other.to_string())),
        }
    }
}

/// Checks that `value` lies in the open unit interval.
pub fn check_probability(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() && value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(ParamError::OutOfUnitInterval { name, value })
    }
}

/// Scenario plus the per-slot arrival probability `lambda1` and the
/// opportunity (permission or harvest) probability `lambda2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub scenario: ScenarioTag,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl ScenarioParams {
    /// Both rates must lie strictly inside (0, 1).
    pub fn new(scenario: ScenarioTag, lambda1: f64, lambda2: f64) -> Result<Self, ParamError> {
        Ok(Self {
            scenario,
            lambda1: check_probability("lambda1", lambda1)?,
            lambda2: check_probability("lambda2", lambda2)?,
        })
    }

    /// Re-runs the range checks, for values built by struct literal or deserialized.
    pub fn validate(&self) -> Result<(), ParamError> {
        check_probability("lambda1", self.lambda1)?;
        check_probability("lambda2", self.lambda2)?;
        Ok(())
    }

    /// Geo/Geo/1 stability, `lambda1 < lambda2`.
    pub fn is_stable(&self) -> bool {
        self.lambda1 < self.lambda2
    }

    /// An unbounded-queue run without stability has no stationary regime.
    pub fn is_nonstationary(&self) -> bool {
        self.scenario.has_unbounded_queue() && !self.is_stable()
    }

    pub fn with_scenario(self, scenario: ScenarioTag) -> Self {
        Self { scenario, ..self }
    }
}

/// Events realized at the start of one slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotEvents {
    /// A packet was received this slot.
    pub arrival: bool,
    /// The controller granted a permission, or one energy unit was harvested.
    pub opportunity: bool,
}

impl SlotEvents {
    pub const fn new(arrival: bool, opportunity: bool) -> Self {
        Self {
            arrival,
            opportunity,
        }
    }
}

/// End-of-slot values of the three age processes, in slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgeTriple {
    pub aoi: u64,
    pub aoa: u64,
    pub aoai: u64,
}

impl AgeTriple {
    /// All three processes start at 1.
    pub const INITIAL: AgeTriple = AgeTriple {
        aoi: 1,
        aoa: 1,
        aoai: 1,
    };

    pub fn get(&self, metric: Metric) -> u64 {
        match metric {
            Metric::Aoi => self.aoi,
            Metric::Aoa => self.aoa,
            Metric::Aoai => self.aoai,
        }
    }

    /// `aoai >= aoi`, `aoai >= aoa` and every age at least 1.
    pub fn is_ordered(&self) -> bool {
        self.aoi >= 1 && self.aoa >= 1 && self.aoai >= self.aoi && self.aoai >= self.aoa
    }

    /// Applies the three evolutions for one slot.
    pub fn advance(&self, arrival: bool, actuated_packet_age: Option<u64>) -> AgeTriple {
        AgeTriple {
            aoi: evolve_aoi(self.aoi, arrival),
            aoa: evolve_aoa(self.aoa, actuated_packet_age.is_some()),
            aoai: evolve_aoai(self.aoai, actuated_packet_age),
        }
    }
}

impl Default for AgeTriple {
    fn default() -> Self {
        Self::INITIAL
    }
}

/// An actuation happens iff there is an opportunity and a packet to use,
/// either stored at the end of the previous slot or received in this one.
///
/// For the battery scenario `events.opportunity` must already mean "energy
/// available this slot" (harvested now or stored).
pub fn actuation_decision(queue_nonempty_prev: bool, events: SlotEvents) -> bool {
    events.opportunity && (queue_nonempty_prev || events.arrival)
}

/// AoI resets to 1 on a reception and grows by one otherwise.
pub fn evolve_aoi(prev_aoi: u64, arrival: bool) -> u64 {
    debug_assert!(prev_aoi >= 1);
    if arrival {
        1
    } else {
        prev_aoi + 1
    }
}

/// AoA resets to 1 on any actuation, whatever the packet's freshness.
pub fn evolve_aoa(prev_aoa: u64, actuated: bool) -> u64 {
    debug_assert!(prev_aoa >= 1);
    if actuated {
        1
    } else {
        prev_aoa + 1
    }
}

/// AoAI after one slot. `actuated_packet_age` is `Some` exactly when an
/// actuation happened and carries the actuated packet's end-of-slot age.
///
/// An actuation can only lower the age to the packet's age; actuating a
/// packet older than the running value (possible under LCFS) leaves it
/// growing.
pub fn evolve_aoai(prev_aoai: u64, actuated_packet_age: Option<u64>) -> u64 {
    debug_assert!(prev_aoai >= 1);
    match actuated_packet_age {
        Some(age) => {
            debug_assert!(age >= 1, "packet ages start at 1");
            (prev_aoai + 1).min(age)
        }
        None => prev_aoai + 1,
    }
}
