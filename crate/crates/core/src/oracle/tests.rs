use std::collections::{HashSet, VecDeque};

use super::*;
use crate::analytic::{self, QueueLaw};
use crate::pattern::QueuePattern;

fn params(s: ScenarioTag, a: f64, b: f64) -> ScenarioParams {
    ScenarioParams::new(s, a, b).unwrap()
}

fn rows(spec: &ChainSpec) -> Vec<Vec<f64>> {
    (0..spec.len()).map(|r| spec.dense_row(r)).collect()
}

fn assert_row(actual: &[f64], expected: &[f64]) {
    assert_eq!(actual.len(), expected.len());
    for (i, (a, e)) in actual.iter().zip(expected).enumerate() {
        assert!(
            (a - e).abs() < 1e-15,
            "column {i}: {a} vs {e}\n{actual:?}\n{expected:?}"
        );
    }
}

struct Rates {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
    a: f64,
    na: f64,
    b: f64,
    nb: f64,
}

fn rates(a: f64, b: f64) -> Rates {
    let r = analytic::RateConstants::new(a, b);
    Rates {
        w: r.w,
        x: r.x,
        y: r.y,
        z: r.z,
        a,
        na: 1.0 - a,
        b,
        nb: 1.0 - b,
    }
}

const A: f64 = 0.3;
const B: f64 = 0.55;

#[test]
fn aoa_buffer_rows() {
    let spec = build_chain(
        ChainId::AoaBuffer,
        &params(ScenarioTag::BufferController, A, B),
        &Limits::new(3, 0, 1),
    )
    .unwrap();
    let labels: Vec<(u32, u32)> = spec.states.iter().map(|s| (s.age, s.queue)).collect();
    assert_eq!(labels, vec![(1, 0), (2, 0), (2, 1), (3, 0), (3, 1)]);
    let Rates {
        w, x, na, b, nb, ..
    } = rates(A, B);
    let r = rows(&spec);
    assert_row(&r[0], &[w, na, x, 0.0, 0.0]);
    assert_row(&r[1], &[w, 0.0, 0.0, na, x]);
    assert_row(&r[2], &[b, 0.0, 0.0, 0.0, nb]);
    assert_row(&r[3], &[w, 0.0, 0.0, 0.0, 0.0]);
    assert_row(&r[4], &[b, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn aoa_battery_rows() {
    let spec = build_chain(
        ChainId::AoaBattery,
        &params(ScenarioTag::BufferBattery, A, B),
        &Limits::new(3, 0, 1),
    )
    .unwrap();
    let labels: Vec<(u32, u32, bool)> = spec
        .states
        .iter()
        .map(|s| (s.age, s.queue, s.battery))
        .collect();
    assert_eq!(
        labels,
        vec![
            (1, 0, false),
            (1, 0, true),
            (2, 0, false),
            (2, 0, true),
            (2, 1, false),
            (3, 0, false),
            (3, 0, true),
            (3, 1, false)
        ]
    );
    let Rates {
        w,
        x,
        y,
        z,
        na,
        b,
        nb,
        ..
    } = rates(A, B);
    let r = rows(&spec);
    assert_row(&r[0], &[w, 0.0, z, y, x, 0.0, 0.0, 0.0]);
    assert_row(&r[1], &[x, w, 0.0, na, 0.0, 0.0, 0.0, 0.0]);
    assert_row(&r[2], &[w, 0.0, 0.0, 0.0, 0.0, z, y, x]);
    assert_row(&r[3], &[x, w, 0.0, 0.0, 0.0, 0.0, na, 0.0]);
    assert_row(&r[4], &[b, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, nb]);
}

#[test]
fn aoai_buffer_rows() {
    let p = params(ScenarioTag::BufferController, A, B);
    let small = build_chain(ChainId::AoaiBuffer, &p, &Limits::new(2, 0, 1)).unwrap();
    assert_eq!(small.len(), 3);
    let Rates { w, x, y, z, na, .. } = rates(A, B);
    assert_row(&small.dense_row(0), &[w, x, na]);

    let spec = build_chain(ChainId::AoaiBuffer, &p, &Limits::new(3, 0, 1)).unwrap();
    let labels: Vec<(u32, u32)> = spec.states.iter().map(|s| (s.age, s.aoi)).collect();
    assert_eq!(labels, vec![(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (3, 3)]);
    let r = rows(&spec);
    assert_row(&r[0], &[w, x, na, 0.0, 0.0, 0.0]);
    assert_row(&r[1], &[w, 0.0, y, x, z, 0.0]);
    assert_row(&r[2], &[w, 0.0, 0.0, x, 0.0, na]);
}

#[test]
fn aoai_battery_rows() {
    let spec = build_chain(
        ChainId::AoaiBattery,
        &params(ScenarioTag::BufferBattery, A, B),
        &Limits::new(3, 0, 1),
    )
    .unwrap();
    let labels: Vec<(u32, u32, bool)> = spec
        .states
        .iter()
        .map(|s| (s.age, s.aoi, s.battery))
        .collect();
    assert_eq!(
        labels,
        vec![
            (1, 1, false),
            (1, 1, true),
            (2, 1, false),
            (2, 2, false),
            (2, 2, true),
            (3, 1, false),
            (3, 2, false),
            (3, 3, false),
            (3, 3, true)
        ]
    );
    let Rates { w, x, y, z, na, .. } = rates(A, B);
    let r = rows(&spec);
    assert_row(&r[0], &[w, 0.0, x, z, y, 0.0, 0.0, 0.0, 0.0]);
    assert_row(&r[1], &[x, w, 0.0, 0.0, na, 0.0, 0.0, 0.0, 0.0]);
    assert_row(&r[2], &[w, 0.0, 0.0, y, 0.0, x, z, 0.0, 0.0]);
    assert_row(&r[3], &[w, 0.0, 0.0, 0.0, 0.0, x, 0.0, z, y]);
    assert_row(&r[4], &[x, w, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, na]);
}

#[test]
fn aoai_inf_rows() {
    let spec = build_chain(
        ChainId::AoaiInf,
        &params(ScenarioTag::InfFcfs, A, B),
        &Limits::new(3, 0, 1),
    )
    .unwrap();
    let labels: Vec<(u32, String)> = spec
        .states
        .iter()
        .map(|s| (s.age, QueuePattern::from_mask(s.pattern).to_string()))
        .collect();
    let expected: Vec<(u32, String)> = [
        (1, "0"),
        (2, "0"),
        (2, "1"),
        (3, "0"),
        (3, "1"),
        (3, "10"),
        (3, "11"),
    ]
    .iter()
    .map(|&(a, p)| (a, p.to_string()))
    .collect();
    assert_eq!(labels, expected);
    let Rates { w, x, y, z, na, .. } = rates(A, B);
    let r = rows(&spec);
    assert_row(&r[0], &[w, na, x, 0.0, 0.0, 0.0, 0.0]);
    assert_row(&r[1], &[w, 0.0, 0.0, na, x, 0.0, 0.0]);
    assert_row(&r[2], &[0.0, y, w, 0.0, 0.0, z, x]);
    assert_row(&r[3], &[w, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert_row(&r[4], &[0.0, y, w, 0.0, 0.0, 0.0, 0.0]);
    assert_row(&r[5], &[0.0, 0.0, 0.0, y, w, 0.0, 0.0]);
    assert_row(&r[6], &[0.0, 0.0, 0.0, 0.0, 0.0, y, w]);
}

#[test]
fn head_chain_rows() {
    let spec = build_chain(
        ChainId::AoaiFcfsHead,
        &params(ScenarioTag::InfFcfs, A, B),
        &Limits::new(4, 0, 1),
    )
    .unwrap();
    let Rates {
        w, x, na, a, b, nb, ..
    } = rates(A, B);
    let idx = |age, head| {
        spec.state_index(&ChainState {
            age,
            head,
            ..Default::default()
        })
        .unwrap()
    };
    let r = spec.dense_row(idx(1, 0));
    assert!((r[idx(1, 0)] - w).abs() < 1e-15);
    assert!((r[idx(2, 1)] - x).abs() < 1e-15);
    assert!((r[idx(2, 0)] - na).abs() < 1e-15);
    // head age 2 with AI = 3: one younger slot plus the new arrival
    let r = spec.dense_row(idx(3, 2));
    assert!((r[idx(4, 3)] - nb).abs() < 1e-15);
    assert!((r[idx(3, 2)] - b * a).abs() < 1e-15);
    assert!((r[idx(3, 1)] - b * na * a).abs() < 1e-15);
    assert!((r[idx(3, 0)] - b * na * na).abs() < 1e-15);
}

#[test]
fn battery_exclusions() {
    let spec = build_chain(
        ChainId::AoaBattery,
        &params(ScenarioTag::BufferBattery, 0.4, 0.3),
        &Limits::new(50, 0, 1),
    )
    .unwrap();
    assert!(spec.states.iter().all(|s| !(s.queue == 1 && s.battery)));
    assert!(spec.states.iter().all(|s| !(s.age == 1 && s.queue == 1)));
    let spec = build_chain(
        ChainId::AoaiBattery,
        &params(ScenarioTag::BufferBattery, 0.4, 0.3),
        &Limits::new(30, 0, 1),
    )
    .unwrap();
    assert!(spec.states.iter().all(|s| !s.battery || s.age == s.aoi));
    assert!(spec.states.iter().all(|s| s.aoi <= s.age));
}

/// Everything reachable from the initial state within the limits, by BFS
/// over the untruncated successors.
fn reachable(id: ChainId, p: &ScenarioParams, spec: &ChainSpec) -> HashSet<ChainState> {
    let mut seen = HashSet::new();
    let start = initial_state(id);
    let mut queue = VecDeque::from([start]);
    seen.insert(start);
    while let Some(s) = queue.pop_front() {
        for (t, _) in successors(id, p, &s) {
            if spec.index.contains_key(&t) {
                if seen.insert(t) {
                    queue.push_back(t);
                }
            } else {
                assert!(
                    !within(id, &spec.limits, &t),
                    "{id}: reachable state {t:?} missing from the enumeration"
                );
            }
        }
    }
    seen
}

fn within(id: ChainId, l: &Limits, s: &ChainState) -> bool {
    match id {
        ChainId::QueueLength => s.queue <= l.max_queue,
        ChainId::QueuePattern => s.pattern < (1 << l.max_head),
        ChainId::AoaInf => s.age <= l.max_age && s.queue <= l.max_queue,
        _ => s.age <= l.max_age,
    }
}

#[test]
fn enumeration_is_exactly_the_reachable_set() {
    let p = params(ScenarioTag::InfFcfs, 0.35, 0.6);
    for id in ChainId::ALL {
        let limits = match id {
            ChainId::AoaiInf => Limits::new(8, 0, 1),
            ChainId::QueuePattern => Limits::new(1, 0, 8),
            _ => Limits::new(12, 6, 1),
        };
        let spec = build_chain(id, &p, &limits).unwrap();
        let seen = reachable(id, &p, &spec);
        let all: HashSet<ChainState> = spec.states.iter().copied().collect();
        assert_eq!(seen, all, "{id}");
    }
}

#[test]
fn rows_are_stochastic_before_truncation() {
    for (a, b) in [(0.1, 0.3), (0.45, 0.5), (0.7, 0.9), (0.2, 0.95)] {
        let p = params(ScenarioTag::InfFcfs, a, b);
        for id in ChainId::ALL {
            let limits = match id {
                ChainId::AoaiInf => Limits::new(9, 0, 1),
                ChainId::QueuePattern => Limits::new(1, 0, 9),
                _ => Limits::new(25, 8, 1),
            };
            let spec = build_chain(id, &p, &limits).unwrap();
            for s in &spec.states {
                let out = successors(id, &p, s);
                let total: f64 = out.iter().map(|(_, q)| q).sum();
                assert!((total - 1.0).abs() < 1e-12, "{id} {s:?}: {total}");
                assert!(out.len() <= 4 || id == ChainId::AoaiFcfsHead);
            }
            // truncated rows never exceed 1
            for r in 0..spec.len() {
                assert!(spec.row(r).iter().map(|t| t.p).sum::<f64>() <= 1.0 + 1e-12);
            }
        }
    }
}

#[test]
fn unstable_and_oversized_chains_are_rejected() {
    let p = params(ScenarioTag::InfFcfs, 0.6, 0.3);
    assert!(matches!(
        build_chain(ChainId::AoaInf, &p, &Limits::new(10, 10, 1)),
        Err(OracleError::Unstable { .. })
    ));
    assert!(build_chain(ChainId::AoaBuffer, &p, &Limits::new(10, 0, 1)).is_ok());
    let p = params(ScenarioTag::InfFcfs, 0.3, 0.6);
    assert!(matches!(
        build_chain(ChainId::AoaiInf, &p, &Limits::new(18, 0, 1)),
        Err(OracleError::Limits(_))
    ));
    let mut l = Limits::new(14, 0, 1);
    l.state_budget = 1000;
    assert!(matches!(
        build_chain(ChainId::AoaiInf, &p, &l),
        Err(OracleError::TooLarge { .. })
    ));
}

#[test]
fn buffer_occupancy_two_thirds() {
    let p = params(ScenarioTag::BufferController, 0.5, 0.5);
    let spec = build_chain(
        ChainId::AoaBuffer,
        &p,
        &Limits::auto(ChainId::AoaBuffer, &p),
    )
    .unwrap();
    let res = stationary(&spec, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
    assert!(res.residual < DEFAULT_TOL);
    let q0: f64 = spec
        .states
        .iter()
        .zip(&res.probabilities)
        .filter(|(s, _)| s.queue == 0)
        .map(|(_, p)| p)
        .sum();
    assert!((q0 - 2.0 / 3.0).abs() < 1e-10, "{q0}");
}

#[test]
fn uniform_two_state_mean() {
    let p = params(ScenarioTag::BufferController, 0.5, 0.5);
    let spec = build_chain(ChainId::AoaiBuffer, &p, &Limits::new(1, 0, 1)).unwrap();
    // one state (1, 1); add a second by hand
    let mut spec2 = spec.clone();
    spec2.states.push(ChainState {
        age: 2,
        aoi: 1,
        ..Default::default()
    });
    let res = StationaryResult {
        probabilities: vec![0.5, 0.5],
        residual: 0.0,
        leaked_mass: 0.0,
        iterations: 0,
    };
    assert_eq!(mean_age(&spec2, &res, Coordinate::Age).mean, 1.5);
}

#[test]
fn aoa_inf_mean_is_inverse_arrival_rate() {
    let p = params(ScenarioTag::InfFcfs, 0.2, 0.5);
    let spec = build_chain(ChainId::AoaInf, &p, &Limits::new(200, 100, 1)).unwrap();
    let res = stationary(&spec, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
    let m = mean_age(&spec, &res, Coordinate::Age);
    assert!((m.mean - 5.0).abs() < 1e-6, "{m:?}");
}

#[test]
fn chain_means_match_closed_forms() {
    let cases = [
        (ScenarioTag::BufferController, 0.5, 0.5, Metric::Aoai, 3.0),
        (
            ScenarioTag::BufferBattery,
            0.3,
            0.5,
            Metric::Aoa,
            3.350270524582451,
        ),
        (
            ScenarioTag::BufferBattery,
            0.3,
            0.5,
            Metric::Aoai,
            3.5189910066409706,
        ),
        (
            ScenarioTag::BufferController,
            0.3,
            0.5,
            Metric::Aoa,
            3.7948717948717947,
        ),
        (
            ScenarioTag::InfFcfs,
            0.2,
            0.5,
            Metric::Aoai,
            6.266666666666667,
        ),
        (
            ScenarioTag::InfLcfs,
            0.2,
            0.7,
            Metric::Aoai,
            5.0 + 1.0 / 0.7 - 1.0,
        ),
        (ScenarioTag::BufferBattery, 0.4, 0.3, Metric::Aoi, 2.5),
    ];
    for (s, a, b, metric, expected) in cases {
        let m = oracle_mean(&params(s, a, b), metric).unwrap();
        assert!(
            (m.mean - expected).abs() < m.tail_bound + 1e-6,
            "{s} {metric} ({a}, {b}): {m:?} vs {expected}"
        );
        assert!(m.tail_bound < 1e-6, "{s} {metric} ({a}, {b}): {m:?}");
    }
}

#[test]
fn head_chain_is_the_lumped_pattern_chain() {
    let p = params(ScenarioTag::InfFcfs, 0.7, 0.9);
    let limits = Limits::new(12, 0, 1);
    let full = build_chain(ChainId::AoaiInf, &p, &limits).unwrap();
    let full_pi = stationary(&full, 1e-14, DEFAULT_MAX_ITERS).unwrap();
    let head = build_chain(ChainId::AoaiFcfsHead, &p, &limits).unwrap();
    let head_pi = stationary(&head, 1e-14, DEFAULT_MAX_ITERS).unwrap();
    let mut lumped = vec![0.0; head.len()];
    for (s, pr) in full.states.iter().zip(&full_pi.probabilities) {
        let h = QueuePattern::from_mask(s.pattern).h();
        let i = head
            .state_index(&ChainState {
                age: s.age,
                head: h,
                ..Default::default()
            })
            .unwrap();
        lumped[i] += pr;
    }
    for (i, (l, h)) in lumped.iter().zip(&head_pi.probabilities).enumerate() {
        assert!((l - h).abs() < 1e-11, "{:?}: {l} vs {h}", head.states[i]);
    }
}

#[test]
fn pattern_law_matches_closed_form() {
    let p = params(ScenarioTag::InfFcfs, 0.2, 0.5);
    let law = queue_pattern_stationary(&p, 8).unwrap();
    let closed = QueueLaw::new(0.2, 0.5).unwrap();
    assert!((law.get("1".parse().unwrap()).unwrap() - closed.gamma1()).abs() < 1e-8);
    let a = law.get("101".parse().unwrap()).unwrap();
    let b = law.get("110".parse().unwrap()).unwrap();
    assert!((a - b).abs() < 1e-9);
    for (pat, v) in &law.probabilities {
        let g = analytic::gamma_state_prob(*pat, 0.2, 0.5).unwrap();
        assert!((v - g).abs() < 1e-7, "{pat}: {v} vs {g}");
    }
    assert_eq!(law.probabilities.len(), 1 + (1 << 8) - 1);
}

#[test]
fn pattern_chain_agrees_with_window_law() {
    let p = params(ScenarioTag::InfFcfs, 0.7, 0.9);
    let law = queue_pattern_stationary(&p, 12).unwrap();
    let spec = build_chain(ChainId::QueuePattern, &p, &Limits::new(1, 0, 12)).unwrap();
    let res = stationary(&spec, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
    assert!(res.leaked_mass < 1e-5);
    let chain = pattern_marginal(&spec, &res);
    for (pat, v) in &law.probabilities {
        assert!((chain[pat] - v).abs() < 1e-5, "{pat}");
    }
    let small_law = queue_pattern_stationary(&p, 3).unwrap();
    let full = build_chain(ChainId::AoaiInf, &p, &Limits::new(17, 0, 1)).unwrap();
    let full_pi = stationary(&full, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
    let marg = pattern_marginal(&full, &full_pi);
    for (pat, v) in &small_law.probabilities {
        assert!((marg[pat] - v).abs() < 1e-6, "{pat}: {} vs {v}", marg[pat]);
    }
}

#[test]
fn queue_length_marginal_is_geometric() {
    let p = params(ScenarioTag::InfFcfs, 0.2, 0.5);
    let spec = build_chain(ChainId::AoaInf, &p, &Limits::auto(ChainId::AoaInf, &p)).unwrap();
    let res = stationary(&spec, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
    let m = queue_length_marginal(&spec, &res).unwrap();
    for (i, v) in m.iter().enumerate().take(20) {
        let d = analytic::queue_length_dist(0.2, 0.5, i as u32).unwrap();
        assert!((v - d).abs() < 1e-8, "{i}: {v} vs {d}");
    }
}

#[test]
fn csv_dump_is_sorted_and_deterministic() {
    let p = params(ScenarioTag::BufferController, 0.3, 0.5);
    let spec = build_chain(ChainId::AoaBuffer, &p, &Limits::new(3, 0, 1)).unwrap();
    let mut a = Vec::new();
    spec.write_csv(&mut a).unwrap();
    let mut b = Vec::new();
    build_chain(ChainId::AoaBuffer, &p, &Limits::new(3, 0, 1))
        .unwrap()
        .write_csv(&mut b)
        .unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("row,col,from,to,probability\n0,0,age=1;queue=0,age=1;queue=0,"));
}

#[test]
fn chain_ids_round_trip() {
    for id in ChainId::ALL {
        assert_eq!(id.as_str().parse::<ChainId>().unwrap(), id);
    }
}
