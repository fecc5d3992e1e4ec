//! Per-UE traffic generation, FCFS queueing, and deadline drops.
//!
//! Packets arrive at the base station's per-UE buffers and are served
//! first-come-first-serve. A packet served across several TTIs keeps its
//! progress in `remaining_bits`. Delay is quantized in whole TTIs and counts
//! the delivery TTI: a packet served in its arrival TTI has one TTI of delay.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

use crate::real::Real;
use crate::rng::SimRng;
use crate::{Tti, UeId};

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("invalid traffic parameter {name}: {value}")]
    InvalidParam { name: &'static str, value: f64 },
}

/// A unit of downlink traffic.
#[derive(Clone, Debug, PartialEq)]
pub struct Packet<R: Real> {
    pub id: u64,
    pub ue_id: UeId,
    pub size_bits: R,
    pub arrival_tti: Tti,
    pub remaining_bits: R,
    pub delivered_tti: Option<Tti>,
}

impl<R: Real> Packet<R> {
    pub fn new(id: u64, ue_id: UeId, size_bits: R, arrival_tti: Tti) -> Self {
        Self { id, ue_id, size_bits, arrival_tti, remaining_bits: size_bits, delivered_tti: None }
    }

    /// Delay in TTIs if resolved at `tti`, counting the resolution TTI.
    #[inline]
    pub fn delay_ttis(&self, tti: Tti) -> u64 {
        tti - self.arrival_tti + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficKind {
    Poisson,
    Periodic,
}

/// Arrival process of one UE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrafficModel<R: Real> {
    pub kind: TrafficKind,
    /// Mean arrival rate in packets per second.
    pub rate_pps: R,
    pub packet_bits: R,
    /// Phase offset in TTIs for periodic arrivals (0 unless the scenario
    /// enables randomized phases).
    pub phase_ttis: Tti,
}

impl<R: Real> TrafficModel<R> {
    pub fn new(kind: TrafficKind, rate_pps: R, packet_bits: R) -> Result<Self, TrafficError> {
        if !(rate_pps > R::zero()) {
            return Err(TrafficError::InvalidParam { name: "rate_pps", value: rate_pps.to_f64_lossy() });
        }
        if !(packet_bits > R::zero()) {
            return Err(TrafficError::InvalidParam {
                name: "packet_bits",
                value: packet_bits.to_f64_lossy(),
            });
        }
        Ok(Self { kind, rate_pps, packet_bits, phase_ttis: 0 })
    }

    pub fn with_phase(mut self, phase_ttis: Tti) -> Self {
        self.phase_ttis = phase_ttis;
        self
    }

    /// Mean arrivals per TTI.
    #[inline]
    pub fn intensity_per_tti(&self, tti_s: R) -> f64 {
        (self.rate_pps * tti_s).to_f64_lossy()
    }

    /// Period of the deterministic process in TTIs (at least 1).
    pub fn period_ttis(&self, tti_s: R) -> Tti {
        let period = (1.0 / self.intensity_per_tti(tti_s)).round() as i64;
        period.max(1) as Tti
    }
}

/// Packets arriving for one UE in one TTI.
///
/// Poisson draws a count from the per-TTI intensity; periodic emits exactly
/// one packet every period, phase-aligned at TTI `phase_ttis`.
pub fn generate_arrivals<R: Real>(
    model: &TrafficModel<R>,
    ue_id: UeId,
    tti: Tti,
    tti_s: R,
    rng: &mut SimRng,
    next_packet_id: &mut u64,
) -> Vec<Packet<R>> {
    let count = match model.kind {
        TrafficKind::Poisson => rng.poisson(model.intensity_per_tti(tti_s)),
        TrafficKind::Periodic => {
            let period = model.period_ttis(tti_s);
            u64::from(tti % period == model.phase_ttis % period)
        }
    };
    (0..count)
        .map(|_| {
            let id = *next_packet_id;
            *next_packet_id += 1;
            Packet::new(id, ue_id, model.packet_bits, tti)
        })
        .collect()
}

/// Per-epoch packet counters of one queue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EpochCounters {
    pub arrived: u64,
    pub delivered: u64,
    pub dropped: u64,
}

/// Result of serving one queue for one TTI.
#[derive(Clone, Debug)]
pub struct ServeOutcome<R: Real> {
    pub delivered: Vec<Packet<R>>,
    /// Bits actually drained from the queue, including partial progress.
    pub served_bits: R,
}

/// FCFS buffer of one UE at the base station.
#[derive(Clone, Debug)]
pub struct UeQueue<R: Real> {
    pub ue_id: UeId,
    packets: VecDeque<Packet<R>>,
    pub epoch: EpochCounters,
}

impl<R: Real> UeQueue<R> {
    pub fn new(ue_id: UeId) -> Self {
        Self { ue_id, packets: VecDeque::new(), epoch: EpochCounters::default() }
    }

    pub fn push(&mut self, packet: Packet<R>) {
        debug_assert_eq!(packet.ue_id, self.ue_id);
        debug_assert!(self.packets.back().is_none_or(|p| p.arrival_tti <= packet.arrival_tti));
        self.epoch.arrived += 1;
        self.packets.push_back(packet);
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.packets.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn queued_bits(&self) -> R {
        self.packets.iter().fold(R::zero(), |acc, p| acc + p.remaining_bits)
    }

    /// `(arrival_tti, remaining_bits)` per queued packet, head first.
    pub fn queued_packets(&self) -> impl Iterator<Item = (Tti, R)> + '_ {
        self.packets.iter().map(|p| (p.arrival_tti, p.remaining_bits))
    }

    pub fn head_arrival_tti(&self) -> Option<Tti> {
        self.packets.front().map(|p| p.arrival_tti)
    }

    /// Drains head-of-line packets with `budget` bits of service capacity.
    pub fn serve(&mut self, budget: R, tti: Tti) -> ServeOutcome<R> {
        let mut budget = budget;
        let mut delivered = Vec::new();
        let mut served_bits = R::zero();
        while budget > R::zero() {
            let Some(head) = self.packets.front_mut() else { break };
            let take = head.remaining_bits.min(budget);
            head.remaining_bits -= take;
            budget -= take;
            served_bits += take;
            if head.remaining_bits == R::zero() {
                let mut packet = self.packets.pop_front().expect("nonempty");
                packet.delivered_tti = Some(tti);
                self.epoch.delivered += 1;
                delivered.push(packet);
            }
        }
        ServeOutcome { delivered, served_bits }
    }

    /// Drops every queued packet whose delay would already exceed `d_max`
    /// were it delivered this TTI. Delivered packets are never touched.
    pub fn expire(&mut self, tti: Tti, d_max_ttis: u64) -> Vec<Packet<R>> {
        let mut dropped = Vec::new();
        // FCFS order means expired packets form a prefix of the queue.
        while let Some(head) = self.packets.front() {
            if head.delay_ttis(tti) > d_max_ttis {
                dropped.push(self.packets.pop_front().expect("nonempty"));
                self.epoch.dropped += 1;
            } else {
                break;
            }
        }
        dropped
    }

    /// Snapshot and reset the per-epoch counters.
    pub fn finish_epoch(&mut self) -> EpochCounters {
        let taken = self.epoch;
        self.epoch = EpochCounters::default();
        taken
    }

    pub fn clear(&mut self) {
        self.packets.clear();
        self.epoch = EpochCounters::default();
    }
}
