//! State enumeration and one-slot dynamics of each chain.

use super::{ChainId, ChainState, Limits, MAX_PATTERN_HEAD};
use crate::error::OracleError;
use crate::model::ScenarioParams;

pub(super) fn check_limits(id: ChainId, limits: &Limits) -> Result<(), OracleError> {
    let bad = |msg: String| Err(OracleError::Limits(msg));
    match id {
        ChainId::QueueLength => {}
        ChainId::QueuePattern => {
            if limits.max_head == 0 || limits.max_head > MAX_PATTERN_HEAD {
                return bad(format!(
                    "max_head must be in 1..={MAX_PATTERN_HEAD}, got {}",
                    limits.max_head
                ));
            }
        }
        ChainId::AoaiInf => {
            if limits.max_age == 0 || limits.max_age > MAX_PATTERN_HEAD + 1 {
                return bad(format!(
                    "the pattern chain keeps head ages below AoAI, so max_age must be in 1..={}, got {}",
                    MAX_PATTERN_HEAD + 1,
                    limits.max_age
                ));
            }
        }
        _ => {
            if limits.max_age == 0 {
                return bad("max_age must be positive".into());
            }
        }
    }
    Ok(())
}

pub(super) fn state_count(id: ChainId, l: &Limits) -> u128 {
    let m = l.max_age as u128;
    let q = l.max_queue as u128;
    match id {
        ChainId::AoaInf => m * (q + 1),
        ChainId::AoaBuffer => 2 * m - 1,
        ChainId::AoaBattery => 3 * m - 1,
        ChainId::AoaiBuffer => m * (m + 1) / 2,
        ChainId::AoaiBattery => m * (m + 1) / 2 + m,
        ChainId::AoaiInf => (1u128 << m) - 1,
        ChainId::AoaiFcfsHead => m * (m + 1) / 2,
        ChainId::QueuePattern => 1u128 << l.max_head,
        ChainId::QueueLength => q + 1,
    }
}

fn st() -> ChainState {
    ChainState::default()
}

/// Feasible states only; the order is fixed afterwards by sorting.
pub(super) fn enumerate(id: ChainId, l: &Limits) -> Vec<ChainState> {
    let m = l.max_age;
    let mut v = Vec::new();
    match id {
        ChainId::AoaInf => {
            for age in 1..=m {
                for queue in 0..=l.max_queue {
                    v.push(ChainState { age, queue, ..st() });
                }
            }
        }
        ChainId::AoaBuffer => {
            // an actuation empties the buffer, so (1, 1) cannot occur
            for age in 1..=m {
                v.push(ChainState {
                    age,
                    queue: 0,
                    ..st()
                });
                if age > 1 {
                    v.push(ChainState {
                        age,
                        queue: 1,
                        ..st()
                    });
                }
            }
        }
        ChainId::AoaBattery => {
            // a stored packet and a stored energy unit would have been used
            // together, and an actuation empties the buffer
            for age in 1..=m {
                v.push(ChainState {
                    age,
                    queue: 0,
                    battery: false,
                    ..st()
                });
                v.push(ChainState {
                    age,
                    queue: 0,
                    battery: true,
                    ..st()
                });
                if age > 1 {
                    v.push(ChainState {
                        age,
                        queue: 1,
                        battery: false,
                        ..st()
                    });
                }
            }
        }
        ChainId::AoaiBuffer => {
            for age in 1..=m {
                for aoi in 1..=age {
                    v.push(ChainState { age, aoi, ..st() });
                }
            }
        }
        ChainId::AoaiBattery => {
            // energy can only be stored while the buffer is empty, i.e. AI = I
            for age in 1..=m {
                for aoi in 1..=age {
                    v.push(ChainState { age, aoi, ..st() });
                    if aoi == age {
                        v.push(ChainState {
                            age,
                            aoi,
                            battery: true,
                            ..st()
                        });
                    }
                }
            }
        }
        ChainId::AoaiInf => {
            // every queued packet is younger than the last actuated one
            for age in 1..=m {
                for pattern in 0..(1u64 << (age - 1)) {
                    v.push(ChainState {
                        age,
                        pattern,
                        ..st()
                    });
                }
            }
        }
        ChainId::AoaiFcfsHead => {
            for age in 1..=m {
                for head in 0..age {
                    v.push(ChainState { age, head, ..st() });
                }
            }
        }
        ChainId::QueuePattern => {
            for pattern in 0..(1u64 << l.max_head) {
                v.push(ChainState { pattern, ..st() });
            }
        }
        ChainId::QueueLength => {
            for queue in 0..=l.max_queue {
                v.push(ChainState { queue, ..st() });
            }
        }
    }
    v
}

pub(super) fn initial(id: ChainId) -> ChainState {
    match id {
        ChainId::QueuePattern | ChainId::QueueLength => st(),
        ChainId::AoaiBuffer | ChainId::AoaiBattery => ChainState {
            age: 1,
            aoi: 1,
            ..st()
        },
        _ => ChainState { age: 1, ..st() },
    }
}

const EVENTS: [(bool, bool); 4] = [(true, true), (true, false), (false, true), (false, false)];

fn push_merged(out: &mut Vec<(ChainState, f64)>, s: ChainState, p: f64) {
    if p == 0.0 {
        return;
    }
    match out.iter_mut().find(|(t, _)| *t == s) {
        Some((_, q)) => *q += p,
        None => out.push((s, p)),
    }
}

fn by_events(
    params: &ScenarioParams,
    s: &ChainState,
    step: impl Fn(&ChainState, bool, bool) -> ChainState,
) -> Vec<(ChainState, f64)> {
    let (a, b) = (params.lambda1, params.lambda2);
    let mut out = Vec::with_capacity(4);
    for (arr, opp) in EVENTS {
        let p = if arr { a } else { 1.0 - a } * if opp { b } else { 1.0 - b };
        push_merged(&mut out, step(s, arr, opp), p);
    }
    out
}

fn highest_bit(mask: u64) -> u64 {
    if mask == 0 {
        0
    } else {
        1u64 << (63 - mask.leading_zeros())
    }
}

/// FCFS pattern update: age every packet, admit the arrival and actuate the
/// oldest packet if permitted. Returns the new mask and the actuated age.
fn fcfs_pattern_step(mask: u64, arr: bool, opp: bool) -> (u64, Option<u32>) {
    let shifted = (mask << 1) | arr as u64;
    if opp && shifted != 0 {
        let head = highest_bit(shifted);
        (shifted & !head, Some(head.trailing_zeros() + 1))
    } else {
        (shifted, None)
    }
}

pub(super) fn successors(
    id: ChainId,
    params: &ScenarioParams,
    s: &ChainState,
) -> Vec<(ChainState, f64)> {
    match id {
        ChainId::AoaInf => by_events(params, s, |s, arr, opp| {
            let act = opp && (s.queue > 0 || arr);
            ChainState {
                age: if act { 1 } else { s.age + 1 },
                queue: s.queue + arr as u32 - act as u32,
                ..*s
            }
        }),
        ChainId::AoaBuffer => by_events(params, s, |s, arr, opp| {
            let act = opp && (s.queue > 0 || arr);
            ChainState {
                age: if act { 1 } else { s.age + 1 },
                queue: (!act && (s.queue > 0 || arr)) as u32,
                ..*s
            }
        }),
        ChainId::AoaBattery => by_events(params, s, |s, arr, opp| {
            let energy = opp || s.battery;
            let act = energy && (s.queue > 0 || arr);
            ChainState {
                age: if act { 1 } else { s.age + 1 },
                queue: (!act && (s.queue > 0 || arr)) as u32,
                battery: if act {
                    s.battery && opp
                } else {
                    s.battery || opp
                },
                ..*s
            }
        }),
        ChainId::AoaiBuffer => by_events(params, s, |s, arr, opp| {
            let occupied = s.age > s.aoi;
            let aoi = if arr { 1 } else { s.aoi + 1 };
            let act = opp && (occupied || arr);
            ChainState {
                age: if act { aoi } else { s.age + 1 },
                aoi,
                ..*s
            }
        }),
        ChainId::AoaiBattery => by_events(params, s, |s, arr, opp| {
            let occupied = s.age > s.aoi;
            let aoi = if arr { 1 } else { s.aoi + 1 };
            let act = (opp || s.battery) && (occupied || arr);
            ChainState {
                age: if act { aoi } else { s.age + 1 },
                aoi,
                battery: if act {
                    s.battery && opp
                } else {
                    s.battery || opp
                },
                ..*s
            }
        }),
        ChainId::AoaiInf => by_events(params, s, |s, arr, opp| {
            let (pattern, actuated) = fcfs_pattern_step(s.pattern, arr, opp);
            let age = match actuated {
                Some(p) => (s.age + 1).min(p),
                None => s.age + 1,
            };
            ChainState { age, pattern, ..*s }
        }),
        ChainId::QueuePattern => by_events(params, s, |s, arr, opp| ChainState {
            pattern: fcfs_pattern_step(s.pattern, arr, opp).0,
            ..*s
        }),
        ChainId::QueueLength => by_events(params, s, |s, arr, opp| {
            let act = opp && (s.queue > 0 || arr);
            ChainState {
                queue: s.queue + arr as u32 - act as u32,
                ..*s
            }
        }),
        ChainId::AoaiFcfsHead => head_successors(params, s),
    }
}

/// Lumped FCFS dynamics on (AI, head age). When the head is actuated the
/// next head is the oldest surviving younger packet; each of the `h - 1`
/// younger positions and the new arrival is occupied with probability
/// lambda1 independently.
fn head_successors(params: &ScenarioParams, s: &ChainState) -> Vec<(ChainState, f64)> {
    let (a, b) = (params.lambda1, params.lambda2);
    let (na, nb) = (1.0 - a, 1.0 - b);
    let mut out = Vec::new();
    let next = |age: u32, head: u32| ChainState { age, head, ..*s };
    if s.head == 0 {
        push_merged(&mut out, next(1, 0), a * b);
        push_merged(&mut out, next(s.age + 1, 1), a * nb);
        push_merged(&mut out, next(s.age + 1, 0), na);
        return out;
    }
    let h = s.head;
    push_merged(&mut out, next(s.age + 1, h + 1), nb);
    // the actuated head has age h + 1, younger than the running AoAI
    let age = h + 1;
    for j in 1..h {
        push_merged(
            &mut out,
            next(age, j + 1),
            b * a * na.powi((h - 1 - j) as i32),
        );
    }
    let none_left = na.powi((h - 1) as i32);
    push_merged(&mut out, next(age, 1), b * none_left * a);
    push_merged(&mut out, next(age, 0), b * none_left * na);
    out
}
