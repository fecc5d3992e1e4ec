//! Per-TTI intra-slice scheduling and common-pool sharing.
//!
//! Throughput slices run proportional fairness; latency slices run earliest
//! deadline first. Grant math works on a *per-RB* rate evaluated at one RB;
//! the rate formulas are linear in allocated bandwidth, so demand estimates
//! scale grants linearly from that figure.

use crate::real::Real;
use crate::{Tti, UeId};

/// RBs granted to one UE within one TTI, split by pool of origin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RbGrant {
    pub ue_id: UeId,
    pub rbs_dedicated: u32,
    pub rbs_common: u32,
}

impl RbGrant {
    #[inline]
    pub fn total(&self) -> u32 {
        self.rbs_dedicated + self.rbs_common
    }
}

/// Proportional-fairness average-rate tracker for one UE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PfState<R: Real> {
    pub ue_id: UeId,
    /// Exponential moving average of served bits per TTI.
    pub avg_rate: R,
}

impl<R: Real> PfState<R> {
    pub fn new(ue_id: UeId, floor: R) -> Self {
        Self { ue_id, avg_rate: floor }
    }

    /// EMA update with window `window_ttis`, clamped at `floor` so the PF
    /// metric never divides by zero.
    pub fn update(&mut self, served_bits: R, window_ttis: R, floor: R) {
        let inv = R::one() / window_ttis;
        self.avg_rate = (R::one() - inv) * self.avg_rate + inv * served_bits;
        if self.avg_rate < floor {
            self.avg_rate = floor;
        }
    }
}

/// One UE as seen by the PF scheduler for one TTI.
#[derive(Clone, Copy, Debug)]
pub struct PfCandidate<R: Real> {
    pub ue_id: UeId,
    /// Achievable bits per TTI on a single RB.
    pub per_rb_rate: R,
    pub avg_rate: R,
    /// Bits waiting in the queue (not yet covered by other grants).
    pub demand_bits: R,
}

/// Proportional-fair RB assignment.
///
/// RBs go one at a time to the eligible UE maximizing
/// `per_rb_rate / avg_rate`; ties pick the lower `ue_id`. A UE stays
/// eligible while its queued bits exceed the capacity already granted, so
/// RBs nobody needs are left ungranted.
pub fn pf_schedule<R: Real>(candidates: &[PfCandidate<R>], rbs: u32) -> Vec<(UeId, u32)> {
    let mut granted = vec![0u32; candidates.len()];
    let needed: Vec<u32> = candidates.iter().map(|c| rbs_to_cover(c.demand_bits, c.per_rb_rate)).collect();
    for _ in 0..rbs {
        let mut best: Option<(usize, R)> = None;
        for (i, c) in candidates.iter().enumerate() {
            if granted[i] >= needed[i] {
                continue;
            }
            let metric = c.per_rb_rate / c.avg_rate;
            let better = match best {
                None => true,
                Some((_, m)) => metric > m,
            };
            if better {
                best = Some((i, metric));
            }
        }
        let Some((i, _)) = best else { break };
        granted[i] += 1;
    }
    candidates
        .iter()
        .zip(&granted)
        .filter(|(_, g)| **g > 0)
        .map(|(c, &g)| (c.ue_id, g))
        .collect()
}

/// One UE as seen by the EDF scheduler for one TTI.
#[derive(Clone, Debug)]
pub struct EdfCandidate<R: Real> {
    pub ue_id: UeId,
    pub per_rb_rate: R,
    /// Queued packets head-first as `(last feasible delivery TTI, bits)`.
    pub packets: Vec<(Tti, R)>,
}

/// Earliest-deadline-first RB assignment.
///
/// Repeatedly picks the UE whose current head packet has the earliest
/// deadline (ties to the lower `ue_id`) and grants it the minimum RBs that
/// drain the head this TTI, capped by the remaining pool. Capacity already
/// granted to a UE carries over to its subsequent packets, so there is no
/// per-packet rounding waste.
pub fn edf_schedule<R: Real>(candidates: &[EdfCandidate<R>], rbs: u32) -> Vec<(UeId, u32)> {
    struct Cursor<R> {
        next_packet: usize,
        granted: u32,
        cum_bits: R,
    }
    let mut cursors: Vec<Cursor<R>> =
        candidates.iter().map(|_| Cursor { next_packet: 0, granted: 0, cum_bits: R::zero() }).collect();
    let mut left = rbs;
    while left > 0 {
        let mut best: Option<(usize, Tti)> = None;
        for (i, cand) in candidates.iter().enumerate() {
            if cand.per_rb_rate <= R::zero() {
                continue;
            }
            let Some(&(deadline, _)) = cand.packets.get(cursors[i].next_packet) else { continue };
            if best.is_none_or(|(_, d)| deadline < d) {
                best = Some((i, deadline));
            }
        }
        let Some((i, _)) = best else { break };
        let cand = &candidates[i];
        let cursor = &mut cursors[i];
        let (_, bits) = cand.packets[cursor.next_packet];
        cursor.cum_bits += bits;
        let need_total = rbs_to_cover(cursor.cum_bits, cand.per_rb_rate);
        let need_extra = need_total.saturating_sub(cursor.granted);
        let grant = need_extra.min(left);
        cursor.granted += grant;
        left -= grant;
        if grant < need_extra {
            break; // pool exhausted mid-packet
        }
        cursor.next_packet += 1;
    }
    candidates
        .iter()
        .zip(&cursors)
        .filter(|(_, cur)| cur.granted > 0)
        .map(|(c, cur)| (c.ue_id, cur.granted))
        .collect()
}

/// Residual RB demand of one slice against the common pool.
#[derive(Clone, Copy, Debug)]
pub struct CommonDemand {
    pub slice_idx: usize,
    /// Higher value is served first.
    pub priority: u32,
    pub demand_rbs: u32,
}

/// Splits the common pool across slices by priority, then demand.
///
/// Slices are served in descending priority (ties to the lower slice index);
/// each receives `min(demand, remaining)`. Returned counts are indexed like
/// the input and never sum beyond `common_rbs`.
pub fn share_common(common_rbs: u32, demands: &[CommonDemand]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..demands.len()).collect();
    order.sort_by(|&a, &b| {
        demands[b]
            .priority
            .cmp(&demands[a].priority)
            .then(demands[a].slice_idx.cmp(&demands[b].slice_idx))
    });
    let mut shares = vec![0u32; demands.len()];
    let mut left = common_rbs;
    for idx in order {
        let take = demands[idx].demand_rbs.min(left);
        shares[idx] = take;
        left -= take;
    }
    shares
}

/// Whole RBs needed to cover `bits` at `per_rb_rate` bits per RB.
#[inline]
pub fn rbs_to_cover<R: Real>(bits: R, per_rb_rate: R) -> u32 {
    if bits <= R::zero() {
        return 0;
    }
    if per_rb_rate <= R::zero() {
        return 0; // unservable this TTI; no grant can help
    }
    let ratio = (bits / per_rb_rate).ceil().to_f64_lossy();
    if ratio >= u32::MAX as f64 { u32::MAX } else { ratio as u32 }
}
