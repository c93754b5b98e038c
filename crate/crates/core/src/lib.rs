//! Age of Information (AoI), Age of Actuation (AoA) and Age of Actuated
//! Information (AoAI) for discrete-time systems in which received packets
//! wait for an actuation opportunity.
//!
//! Four scenarios are covered: an unbounded Geo/Geo/1 queue served oldest
//! first or freshest first under controller permissions, a single-packet
//! buffer under controller permissions, and a single-packet buffer whose
//! actuations draw on a one-unit energy-harvesting battery. For each there
//! is a seeded slot-level simulator, the closed-form averages, and a
//! truncated Markov-chain oracle that recovers the same averages
//! numerically.

pub mod analytic;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod pattern;
pub mod rng;
pub mod simulator;
pub mod stats;
pub mod verify;

pub use error::{AnalyticError, OptimizeError, OracleError, ParamError, SimError, VerifyError};
pub use model::{
    actuation_decision, evolve_aoa, evolve_aoai, evolve_aoi, AgeTriple, Metric, ScenarioParams,
    ScenarioTag, SlotEvents,
};
pub use pattern::QueuePattern;
pub use simulator::{replicate, simulate, AgeStats, SimConfig, SimOutput, SlotRecord, SystemState};
