//! Deterministic event streams.
//!
//! Each run uses ChaCha8 seeded from the 64-bit run seed. Arrivals are drawn
//! from stream 1 and opportunities from stream 2 of the same key, so the two
//! Bernoulli processes are independent and each is reproducible on its own.
//! A Bernoulli(p) draw consumes one `u64` and succeeds iff it is below
//! `floor(p * 2^64)`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::model::SlotEvents;

pub const ARRIVAL_STREAM: u64 = 1;
pub const OPPORTUNITY_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Threshold(u64);

impl Threshold {
    fn new(p: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&p));
        // saturating float-to-int cast
        Threshold((p * 18_446_744_073_709_551_616.0) as u64)
    }
}

/// Source of per-slot `(arrival, opportunity)` events.
#[derive(Clone, Debug)]
pub struct EventStream {
    arrivals: ChaCha8Rng,
    opportunities: ChaCha8Rng,
    arrival_threshold: Threshold,
    opportunity_threshold: Threshold,
}

impl EventStream {
    pub fn new(seed: u64, lambda1: f64, lambda2: f64) -> Self {
        let mut arrivals = ChaCha8Rng::seed_from_u64(seed);
        arrivals.set_stream(ARRIVAL_STREAM);
        let mut opportunities = ChaCha8Rng::seed_from_u64(seed);
        opportunities.set_stream(OPPORTUNITY_STREAM);
        Self {
            arrivals,
            opportunities,
            arrival_threshold: Threshold::new(lambda1),
            opportunity_threshold: Threshold::new(lambda2),
        }
    }

    #[inline]
    pub fn next_events(&mut self) -> SlotEvents {
        SlotEvents {
            arrival: self.arrivals.next_u64() < self.arrival_threshold.0,
            opportunity: self.opportunities.next_u64() < self.opportunity_threshold.0,
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index`. Replication 0 reuses the base seed, so a
/// single replication reproduces a plain run.
pub fn replication_seed(base: u64, index: u64) -> u64 {
    if index == 0 {
        base
    } else {
        splitmix64(base ^ splitmix64(index))
    }
}
