//! Episode-level invariant audits: resource-block conservation every TTI,
//! hard isolation between dedicated pools, the allocation constraint after
//! every action, and event-log recounts of the epoch SLA scores.

use slicesim_core::env::{ActionSpace, EpochTrace, SimEnv, SlicingAction};
use slicesim_core::harness::Profile;
use slicesim_core::rng::{SimRng, StreamKind};
use slicesim_core::{Tti, UeId};

use std::collections::HashMap;

fn desk_env(collect_trace: bool, seed: u64) -> SimEnv<f64> {
    let resolved = Profile::Desk.load().unwrap();
    let mut cfg = resolved.env_config::<f64>().unwrap();
    cfg.collect_trace = collect_trace;
    SimEnv::new(cfg, seed).unwrap()
}

/// Groups per-TTI grant totals: `tti -> (per-slice dedicated, total common)`.
fn grants_by_tti(trace: &EpochTrace<f64>, num_slices: usize) -> HashMap<Tti, (Vec<u32>, u32)> {
    let mut map: HashMap<Tti, (Vec<u32>, u32)> = HashMap::new();
    for &(tti, slice, ded, common) in &trace.grants {
        let entry = map.entry(tti).or_insert_with(|| (vec![0; num_slices], 0));
        entry.0[slice] += ded;
        entry.1 += common;
    }
    map
}

#[test]
fn rb_conservation_and_isolation_hold_every_tti() {
    let mut env = desk_env(true, 2024);
    let space = ActionSpace::new(&env.config().action_step_sizes.clone(), 2);
    let num_slices = env.config().slices.len();
    let total_rbs = env.config().total_rbs();
    let mut action_rng = SimRng::new(99, StreamKind::Test, 0);

    env.reset(0).unwrap();
    let mut epochs = 0;
    while !env.is_terminal() {
        let action = space.decode(action_rng.index(space.joint_count()));
        let (_, _, info) = env.step(&action).unwrap();
        // Allocation constraint after every action.
        assert_eq!(info.allocation.total(), total_rbs);
        assert!(info.allocation.dedicated.iter().all(|&w| w >= 1));

        let trace = info.trace.as_ref().expect("trace enabled");
        for (tti, (ded, common)) in grants_by_tti(trace, num_slices) {
            let mut granted_total = common;
            for (slice_idx, &granted) in ded.iter().enumerate() {
                // Hard isolation: a slice never consumes beyond its own
                // dedicated pool; cross-slice dedicated usage is impossible.
                assert!(
                    granted <= info.allocation.dedicated[slice_idx],
                    "tti {tti}: slice {slice_idx} granted {granted} from pool {}",
                    info.allocation.dedicated[slice_idx]
                );
                granted_total += granted;
            }
            assert!(
                common <= info.allocation.common,
                "tti {tti}: common grants {common} exceed pool {}",
                info.allocation.common
            );
            assert!(granted_total <= total_rbs, "tti {tti}: granted {granted_total}");
        }
        epochs += 1;
    }
    assert_eq!(epochs, env.config().epochs_per_episode);
}

#[test]
fn with_zero_common_total_consumption_equals_the_hard_scheme() {
    // Same seed, same zero-sum actions: hybrid machinery with an empty pool
    // must grant exactly what the hard scheme grants, TTI by TTI.
    let run = |hybrid: bool| -> Vec<(Tti, usize, u32, u32)> {
        let resolved = Profile::Desk.load().unwrap();
        let mut cfg = resolved.env_config::<f64>().unwrap();
        cfg.collect_trace = true;
        cfg.hybrid = hybrid;
        cfg.initial_dedicated = vec![14, 6];
        cfg.initial_common = 0;
        let mut env = SimEnv::new(cfg, 7).unwrap();
        env.reset(0).unwrap();
        let mut grants = Vec::new();
        for deltas in [[0, 0], [-1, 1], [1, -1], [-1, 1], [0, 0]] {
            let (_, _, info) =
                env.step(&SlicingAction { deltas: deltas.to_vec() }).unwrap();
            grants.extend(info.trace.unwrap().grants);
        }
        grants
    };
    assert_eq!(run(true), run(false));
}

#[test]
fn throughput_score_matches_event_log_recount() {
    // Light load so every queue drains within each epoch: the recount from
    // arrival/delivery events then reconstructs q exactly.
    let resolved = Profile::Desk.load().unwrap();
    let mut cfg = resolved.env_config::<f64>().unwrap();
    cfg.collect_trace = true;
    cfg.epochs_per_episode = 8;
    // Shrink offered load to a trickle.
    for slice in &mut cfg.slices {
        slice.traffic =
            slicesim_core::traffic::TrafficModel::new(slice.traffic.kind, 20.0, 4000.0).unwrap();
    }
    let threshold_bits = match cfg.slices[0].sla {
        slicesim_core::metrics::SlaTarget::Throughput { rate_threshold_bps, .. } => {
            rate_threshold_bps * cfg.epoch_ttis as f64 * cfg.channel.tti_s
        }
        _ => panic!("slice 0 has a throughput SLA"),
    };
    let embb_ues: Vec<UeId> = (0..cfg.slices[0].num_ues).collect();

    let mut env = SimEnv::new(cfg, 5).unwrap();
    env.reset(0).unwrap();
    let noop = SlicingAction::noop(2);
    for _ in 0..8 {
        let (_, _, info) = env.step(&noop).unwrap();
        let trace = info.trace.as_ref().unwrap();

        // Queues must have drained for the recount to be exact.
        let arrived: f64 = trace.arrivals.iter().map(|&(_, _, bits)| bits).sum();
        let served: f64 = trace.serve_events.iter().map(|&(_, _, bits)| bits).sum();
        assert!((arrived - served).abs() < 1e-6, "queues did not drain: {arrived} vs {served}");

        let mut per_ue_served: HashMap<UeId, f64> = HashMap::new();
        for &(_, ue, bits) in &trace.serve_events {
            *per_ue_served.entry(ue).or_default() += bits;
        }
        let recount: f64 = embb_ues
            .iter()
            .map(|ue| {
                let served = per_ue_served.get(ue).copied().unwrap_or(0.0);
                let offered: f64 = trace
                    .arrivals
                    .iter()
                    .filter(|&&(_, u, _)| u == *ue)
                    .map(|&(_, _, bits)| bits)
                    .sum();
                if offered == 0.0 { 1.0 } else { (served / threshold_bits).min(1.0) }
            })
            .sum::<f64>()
            / embb_ues.len() as f64;
        let logged = info.stats.per_slice[0].q_sla;
        assert!((recount - logged).abs() < 1e-9, "recount {recount} vs logged {logged}");
    }
}

#[test]
fn reliability_score_matches_event_log_recount() {
    let resolved = Profile::Desk.load().unwrap();
    let mut cfg = resolved.env_config::<f64>().unwrap();
    cfg.collect_trace = true;
    cfg.epochs_per_episode = 8;
    // Starve the latency slice a little so drops actually happen.
    cfg.initial_dedicated = vec![19, 1];
    cfg.initial_common = 0;
    let d_max_ttis = 5;
    let urllc_ues: Vec<UeId> =
        (cfg.slices[0].num_ues..cfg.slices[0].num_ues + cfg.slices[1].num_ues).collect();

    let mut env = SimEnv::new(cfg, 6).unwrap();
    env.reset(0).unwrap();
    let noop = SlicingAction::noop(2);
    let mut saw_drops = false;
    for _ in 0..8 {
        let (_, _, info) = env.step(&noop).unwrap();
        let trace = info.trace.as_ref().unwrap();
        saw_drops |= !trace.drops.is_empty();

        let recount: f64 = urllc_ues
            .iter()
            .map(|ue| {
                let in_deadline = trace
                    .deliveries
                    .iter()
                    .filter(|&&(_, u, delay)| u == *ue && delay <= d_max_ttis)
                    .count() as f64;
                let delivered =
                    trace.deliveries.iter().filter(|&&(_, u, _)| u == *ue).count() as f64;
                let dropped = trace.drops.iter().filter(|&&(_, u)| u == *ue).count() as f64;
                let resolved = delivered + dropped;
                if resolved == 0.0 { 1.0 } else { in_deadline / resolved }
            })
            .sum::<f64>()
            / urllc_ues.len() as f64;
        let logged = info.stats.per_slice[1].q_sla;
        assert!((recount - logged).abs() < 1e-12, "recount {recount} vs logged {logged}");
    }
    assert!(saw_drops, "scenario must exercise deadline drops");
}

#[test]
fn delivered_packets_never_exceed_their_deadline() {
    let mut env = desk_env(true, 11);
    env.reset(0).unwrap();
    let noop = SlicingAction::noop(2);
    for _ in 0..10 {
        let (_, _, info) = env.step(&noop).unwrap();
        let trace = info.trace.as_ref().unwrap();
        // uRLLC UEs start after the 4 eMBB UEs in the desk profile.
        for &(_, ue, delay) in &trace.deliveries {
            if ue >= 4 {
                assert!(delay <= 5, "ue {ue} delivered with delay {delay}");
            }
        }
    }
}
