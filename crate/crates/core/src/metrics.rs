//! Epoch-level SLA, isolation, utilization, spectral efficiency, and utility.
//!
//! All scores live in `[0, 1]` except spectral efficiency and utility.
//! Degenerate denominators resolve to the vacuous value 1 (an empty slice
//! has nothing to violate; an unallocated pool wastes nothing).

use serde::{Deserialize, Serialize};

use crate::real::Real;

/// SLA target of one slice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlaTarget<R: Real> {
    /// Throughput SLA: each UE should carry `rate_threshold_bps`.
    Throughput { rate_threshold_bps: R, q_threshold: R },
    /// Delay/reliability SLA: packets must be delivered within `d_max_s`,
    /// with `reliability_target` as the advertised per-packet reliability.
    DelayReliability { d_max_s: R, reliability_target: R, q_threshold: R },
}

impl<R: Real> SlaTarget<R> {
    pub fn q_threshold(&self) -> R {
        match *self {
            SlaTarget::Throughput { q_threshold, .. } => q_threshold,
            SlaTarget::DelayReliability { q_threshold, .. } => q_threshold,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            SlaTarget::Throughput { .. } => "throughput",
            SlaTarget::DelayReliability { .. } => "delay-reliability",
        }
    }
}

/// Throughput SLA satisfaction for one slice in one epoch.
///
/// Mean over UEs of `min(served / threshold, 1)`, where the threshold is the
/// per-epoch bit budget `rate_threshold_bps * T * tti_s`. UEs whose offered
/// traffic in this epoch is zero contribute 1 (vacuous satisfaction, same
/// convention as [`q_delay`] for unresolved UEs). An empty slice scores 1.
pub fn q_rate<R: Real>(
    per_ue: &[UeRateSample<R>],
    rate_threshold_bps: R,
    epoch_ttis: u64,
    tti_s: R,
) -> R {
    debug_assert!(epoch_ttis >= 1);
    if per_ue.is_empty() {
        return R::one();
    }
    let threshold_bits = rate_threshold_bps * R::of(epoch_ttis as f64) * tti_s;
    let sum = per_ue.iter().fold(R::zero(), |acc, ue| {
        let score = if ue.offered_bits == R::zero() || threshold_bits <= R::zero() {
            R::one()
        } else {
            (ue.served_bits / threshold_bits).min(R::one())
        };
        acc + score
    });
    sum / R::of(per_ue.len() as f64)
}

/// One UE's epoch throughput sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UeRateSample<R> {
    pub served_bits: R,
    /// Bits that were available to serve this epoch (carry-in plus arrivals).
    pub offered_bits: R,
}

/// One UE's epoch reliability sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UeDelaySample {
    pub delivered_in_deadline: u64,
    /// Packets resolved this epoch: delivered plus dropped.
    pub resolved: u64,
}

/// Delay/reliability SLA satisfaction: mean over UEs of the fraction of
/// resolved packets delivered within the deadline. A UE with nothing
/// resolved this epoch contributes 1.
pub fn q_delay<R: Real>(per_ue: &[UeDelaySample]) -> R {
    if per_ue.is_empty() {
        return R::one();
    }
    let sum = per_ue.iter().fold(R::zero(), |acc, ue| {
        let theta = if ue.resolved == 0 {
            R::one()
        } else {
            R::of(ue.delivered_in_deadline as f64) / R::of(ue.resolved as f64)
        };
        acc + theta
    });
    sum / R::of(per_ue.len() as f64)
}

/// Isolation degree: dedicated resources over total consumed,
/// `w_m / (w_m + w_cm)` with `w_cm` the mean common-pool RBs per TTI.
/// Both zero resolves to 1.
pub fn isolation<R: Real>(dedicated_rbs: u32, common_used_mean: R) -> R {
    let w = R::of(dedicated_rbs as f64);
    let total = w + common_used_mean;
    if total <= R::zero() {
        return R::one();
    }
    w / total
}

/// Spectral efficiency of one epoch: total served bits across all UEs and
/// TTIs, normalized by the number of RBs.
pub fn spectral_efficiency<R: Real>(total_served_bits: R, num_rbs: u32) -> R {
    total_served_bits / R::of(num_rbs as f64)
}

/// Resource utilization: granted dedicated RB-TTIs over the allocated
/// budget `w_m * T`. An unallocated slice (w = 0) scores 1.
pub fn utilization<R: Real>(granted_rb_ttis: u64, dedicated_rbs: u32, epoch_ttis: u64) -> R {
    if dedicated_rbs == 0 {
        return R::one();
    }
    R::of(granted_rb_ttis as f64) / (R::of(dedicated_rbs as f64) * R::of(epoch_ttis as f64))
}

/// Epoch utility: `sum_m alpha_m * Q_m + beta * prod_m 1(Q_m >= th_m) * S`.
pub fn utility<R: Real>(q: &[R], s_k: R, alphas: &[R], beta: R, q_thresholds: &[R]) -> R {
    debug_assert_eq!(q.len(), alphas.len());
    debug_assert_eq!(q.len(), q_thresholds.len());
    let weighted: R = q.iter().zip(alphas).fold(R::zero(), |acc, (&qm, &am)| acc + am * qm);
    weighted + beta * sla_indicator(q, q_thresholds) * s_k
}

/// Product of per-slice SLA indicators: 1 when every `Q_m >= th_m`, else 0.
pub fn sla_indicator<R: Real>(q: &[R], q_thresholds: &[R]) -> R {
    if q.iter().zip(q_thresholds).all(|(&qm, &th)| qm >= th) {
        R::one()
    } else {
        R::zero()
    }
}

/// Per-slice scores of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceEpochStats<R> {
    pub q_sla: R,
    pub isolation: R,
    pub utilization: R,
    pub dedicated_rbs: u32,
    /// Mean common-pool RBs consumed per TTI.
    pub common_used_mean: R,
}

/// Scores of one epoch: per-slice plus global.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats<R> {
    pub per_slice: Vec<SliceEpochStats<R>>,
    pub spectral_eff: R,
    /// `spectral_eff / s_max`, the reward-facing normalization.
    pub s_normalized: R,
    pub utility: R,
}

impl<R: Real> EpochStats<R> {
    pub fn q_values(&self) -> Vec<R> {
        self.per_slice.iter().map(|s| s.q_sla).collect()
    }
}
