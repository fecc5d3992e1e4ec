//! Downlink RAN slicing simulator with a hybrid hard/soft resource framework.
//!
//! A single base station serves multiple network slices (eMBB-style
//! throughput slices, uRLLC-style latency slices) over a pool of resource
//! blocks. Each slice owns a dedicated pool; an optional *common* pool is
//! shared across slices by demand and priority. A DQN agent re-partitions
//! the pools once per epoch to hold per-slice SLAs while maximizing spectral
//! efficiency under isolation constraints; static and exhaustive-search
//! baselines are included for comparison.
//!
//! Module map:
//! - [`radio`]: pathloss, SINR, Shannon and finite-blocklength rates.
//! - [`traffic`]: packet generation, FCFS queues, deadline drops.
//! - [`scheduler`]: per-TTI proportional-fair / earliest-deadline-first
//!   scheduling and common-pool sharing.
//! - [`metrics`]: epoch-level SLA, isolation, utilization, utility.
//! - [`mod@env`]: the epoch-step environment (state, action, reward).
//! - [`agent`]: DQN with replay and a target network, built from scratch.
//! - [`baselines`]: static weighted slicing, hard-slicing config transform,
//!   exhaustive-search oracle.
//! - [`harness`]: config files, run orchestration, CSV logs, comparisons.
//!
//! The numeric core is generic over the scalar type via [`real::Real`];
//! concrete `f64` aliases are exported at the crate root.

// Validations are written as `!(x > 0)` on purpose: the negated form also
// rejects NaN, which `x <= 0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod baselines;
pub mod env;
pub mod harness;
pub mod metrics;
pub mod radio;
pub mod real;
pub mod rng;
pub mod scheduler;
pub mod traffic;

pub use real::Real;

/// UE identifier, unique within a scenario.
pub type UeId = u32;

/// TTI index within an episode.
pub type Tti = u64;

/// Crate version stamped into run logs and checkpoints.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// Concrete type aliases for the default double-precision instantiation,
// plus single-precision variants where experimentation wants them.
pub type Env64 = env::SimEnv<f64>;
pub type Env32 = env::SimEnv<f32>;
pub type QNetwork64 = agent::QNetwork<f64>;
pub type QNetwork32 = agent::QNetwork<f32>;
pub type ReplayBuffer64 = agent::ReplayBuffer<f64>;
pub type DqnAgent64 = agent::DqnAgent<f64>;
pub type EpochStats64 = metrics::EpochStats<f64>;
