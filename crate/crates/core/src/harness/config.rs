//! Experiment configuration: a single human-editable TOML file, fully
//! validated, with every default echoed back out for audit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent;
use crate::baselines::split_largest_remainder;
use crate::env::{EnvConfig, RateRegime, SchedulerKind, SliceSpec};
use crate::metrics::SlaTarget;
use crate::radio::{ChannelParams, FadingModel, PathlossModel};
use crate::real::Real;
use crate::traffic::{TrafficKind, TrafficModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation { field: field.to_string(), message: message.into() }
}

/// Which allocator drives the run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Hybrid slicing with the DQN agent.
    Proposed,
    /// Purely hard slicing with the same DQN agent.
    HardDqn,
    /// Static weight-based slicing, no agent.
    Nvs,
    /// Exhaustive-search static oracle.
    Op,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Proposed => "proposed",
            Algorithm::HardDqn => "hard-dqn",
            Algorithm::Nvs => "nvs",
            Algorithm::Op => "op",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    pub kind: TrafficKind,
    pub rate_pps: f64,
    pub packet_bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum SlaSection {
    Throughput { rate_threshold_bps: f64, q_threshold: f64 },
    DelayReliability { d_max_s: f64, reliability_target: f64, q_threshold: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerName {
    Pf,
    Edf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeName {
    LongPacket,
    ShortPacket,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSection {
    pub name: String,
    pub num_ues: u32,
    pub scheduler: SchedulerName,
    pub regime: RegimeName,
    pub alpha: f64,
    pub isolation_threshold: f64,
    pub traffic: TrafficSection,
    pub sla: SlaSection,
    /// Short-packet decoding error probability (short-packet slices only).
    #[serde(default)]
    pub error_prob: Option<f64>,
    /// Randomize periodic arrival phases per UE.
    #[serde(default)]
    pub random_phase: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub area_m: f64,
    pub num_rbs: u32,
    pub rb_bandwidth_hz: f64,
    pub tti_s: f64,
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub pathloss: PathlossModel,
    pub shadowing_stddev_db: f64,
    pub fading: FadingModel,
    /// TTIs per epoch (T).
    pub epoch_ttis: u64,
    /// Epochs per episode (K).
    pub epochs_per_episode: u64,
    pub initial_common_rbs: u32,
    /// Explicit initial dedicated pools; defaults to a traffic-proportional
    /// split of the RBs left after the common pool.
    #[serde(default)]
    pub initial_dedicated_rbs: Option<Vec<u32>>,
    /// Static-slicing weights; defaults to traffic-proportional shares.
    #[serde(default)]
    pub nvs_weights: Option<Vec<f64>>,
    pub action_step_sizes: Vec<u32>,
    pub beta: f64,
    pub rho: f64,
    pub hybrid: bool,
    #[serde(default = "default_min_dedicated")]
    pub min_dedicated_rbs: u32,
    #[serde(default = "default_pf_window")]
    pub pf_window_ttis: f64,
    #[serde(default = "default_pf_floor")]
    pub pf_rate_floor_bits: f64,
    pub slices: Vec<SliceSection>,
}

fn default_min_dedicated() -> u32 {
    1
}
fn default_pf_window() -> f64 {
    100.0
}
fn default_pf_floor() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub discount: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub replay_capacity: usize,
    pub target_sync_period: u64,
    pub train_steps_per_epoch: u32,
    pub episodes: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Defaults to 60% of the total training epochs.
    pub eps_decay_epochs: Option<u64>,
    pub hidden_layers: Vec<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            discount: 0.9,
            batch_size: 32,
            learning_rate: 1e-3,
            grad_clip: 10.0,
            replay_capacity: 10_000,
            target_sync_period: 50,
            train_steps_per_epoch: 4,
            episodes: 5,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_epochs: None,
            hidden_layers: vec![64, 64],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub grid_step: u32,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { grid_step: 5 }
    }
}

/// The whole experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

fn default_out_dir() -> String {
    "runs".to_string()
}

/// A parsed, validated config with defaults resolved and hashes computed.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub experiment: ExperimentConfig,
    /// Canonical serialization of the resolved experiment (defaults filled).
    pub canonical_toml: String,
    /// Hash of the scenario section only; runs over the same scenario are
    /// comparable regardless of algorithm or training knobs.
    pub scenario_hash: String,
    /// Hash of the whole resolved config.
    pub config_hash: String,
}

/// FNV-1a 64-bit, stable across platforms and runs.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl ResolvedConfig {
    pub fn from_experiment(mut experiment: ExperimentConfig) -> Result<Self, ConfigError> {
        // Fill derived defaults before hashing so the echo is complete.
        if experiment.train.eps_decay_epochs.is_none() {
            let total = experiment.train.episodes * experiment.scenario.epochs_per_episode;
            experiment.train.eps_decay_epochs = Some((total * 3) / 5);
        }
        if experiment.scenario.initial_dedicated_rbs.is_none() {
            let scenario = &experiment.scenario;
            let pool = scenario
                .num_rbs
                .checked_sub(scenario.initial_common_rbs)
                .ok_or_else(|| {
                    invalid(
                        "scenario.initial_common_rbs",
                        "common pool exceeds the total RBs",
                    )
                })?;
            let weights = traffic_weights(scenario);
            experiment.scenario.initial_dedicated_rbs =
                Some(split_largest_remainder(&weights, pool));
        }
        if experiment.scenario.nvs_weights.is_none() {
            experiment.scenario.nvs_weights = Some(traffic_weights(&experiment.scenario));
        }
        validate(&experiment)?;
        let canonical_toml = toml::to_string_pretty(&experiment)
            .map_err(|e| ConfigError::Parse(format!("cannot serialize resolved config: {e}")))?;
        let scenario_toml = toml::to_string_pretty(&experiment.scenario)
            .map_err(|e| ConfigError::Parse(format!("cannot serialize scenario: {e}")))?;
        Ok(Self {
            scenario_hash: format!("{:016x}", fnv1a64(scenario_toml.as_bytes())),
            config_hash: format!("{:016x}", fnv1a64(canonical_toml.as_bytes())),
            canonical_toml,
            experiment,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let experiment: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_experiment(experiment)
    }

    /// Builds the environment config for the chosen scalar type.
    pub fn env_config<R: Real>(&self) -> Result<EnvConfig<R>, ConfigError> {
        build_env_config(&self.experiment.scenario)
    }

    pub fn train_config<R: Real>(&self) -> agent::TrainConfig<R> {
        let t = &self.experiment.train;
        agent::TrainConfig {
            discount: R::of(t.discount),
            batch_size: t.batch_size,
            learning_rate: R::of(t.learning_rate),
            grad_clip: R::of(t.grad_clip),
            replay_capacity: t.replay_capacity,
            target_sync_period: t.target_sync_period,
            train_steps_per_epoch: t.train_steps_per_epoch,
            eps_start: t.eps_start,
            eps_end: t.eps_end,
            eps_decay_epochs: t.eps_decay_epochs.unwrap_or(0),
            hidden_layers: t.hidden_layers.clone(),
        }
    }

    /// Static-slicing weights: explicit from the file or traffic-proportional.
    pub fn nvs_weights(&self) -> Vec<f64> {
        self.experiment
            .scenario
            .nvs_weights
            .clone()
            .expect("resolved config always has weights")
    }
}

/// Loads and validates a config file.
pub fn load_config(path: &Path) -> Result<ResolvedConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    ResolvedConfig::from_toml_str(&text)
}

/// Bundled scenario profiles compiled into the binary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// Full-scale scenario: 100 RBs, 20 + 50 UEs.
    Paper,
    /// Desk-scale scenario sized for minutes-long experiments:
    /// 20 RBs, 4 + 10 UEs.
    Desk,
}

impl Profile {
    pub fn toml_text(self) -> &'static str {
        match self {
            Profile::Paper => include_str!("../../configs/paper.toml"),
            Profile::Desk => include_str!("../../configs/desk.toml"),
        }
    }

    pub fn load(self) -> Result<ResolvedConfig, ConfigError> {
        ResolvedConfig::from_toml_str(self.toml_text())
    }
}

fn traffic_weights(scenario: &ScenarioConfig) -> Vec<f64> {
    scenario
        .slices
        .iter()
        .map(|s| s.num_ues as f64 * s.traffic.rate_pps * s.traffic.packet_bits)
        .collect()
}

fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn validate(experiment: &ExperimentConfig) -> Result<(), ConfigError> {
    if experiment.seeds.is_empty() {
        return Err(invalid("seeds", "at least one seed is required"));
    }
    let scenario = &experiment.scenario;
    let dedicated =
        scenario.initial_dedicated_rbs.as_ref().expect("resolved before validation");
    if dedicated.len() != scenario.slices.len() {
        return Err(invalid(
            "scenario.initial_dedicated_rbs",
            format!("{} entries for {} slices", dedicated.len(), scenario.slices.len()),
        ));
    }
    let total: u32 = dedicated.iter().sum::<u32>() + scenario.initial_common_rbs;
    if total != scenario.num_rbs {
        return Err(invalid(
            "scenario.initial_dedicated_rbs",
            format!(
                "allocation constraint violated: sum(dedicated) + common = {total} \
                 must equal num_rbs = {}",
                scenario.num_rbs
            ),
        ));
    }
    if let Some(weights) = &scenario.nvs_weights {
        if weights.len() != scenario.slices.len() {
            return Err(invalid("scenario.nvs_weights", "one weight per slice required"));
        }
        if weights.iter().any(|&w| w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("scenario.nvs_weights", "weights must be nonnegative, sum > 0"));
        }
    }
    if experiment.train.batch_size == 0 {
        return Err(invalid("train.batch_size", "must be at least 1"));
    }
    if !(experiment.train.discount >= 0.0 && experiment.train.discount < 1.0) {
        return Err(invalid("train.discount", "must lie in [0, 1)"));
    }
    if !(0.0..=1.0).contains(&experiment.train.eps_start)
        || !(0.0..=1.0).contains(&experiment.train.eps_end)
    {
        return Err(invalid("train.eps_start/eps_end", "must lie in [0, 1]"));
    }
    if experiment.train.episodes == 0 {
        return Err(invalid("train.episodes", "must be at least 1"));
    }
    if experiment.oracle.grid_step == 0 {
        return Err(invalid("oracle.grid_step", "must be at least 1"));
    }
    for (i, slice) in scenario.slices.iter().enumerate() {
        let field = |name: &str| format!("scenario.slices[{i}].{name}");
        match slice.sla {
            SlaSection::Throughput { rate_threshold_bps, q_threshold } => {
                if rate_threshold_bps <= 0.0 {
                    return Err(invalid(&field("sla.rate_threshold_bps"), "must be positive"));
                }
                if !(q_threshold > 0.0 && q_threshold <= 1.0) {
                    return Err(invalid(&field("sla.q_threshold"), "must lie in (0, 1]"));
                }
            }
            SlaSection::DelayReliability { d_max_s, reliability_target, q_threshold } => {
                if d_max_s <= 0.0 {
                    return Err(invalid(&field("sla.d_max_s"), "must be positive"));
                }
                if !(reliability_target > 0.0 && reliability_target <= 1.0) {
                    return Err(invalid(&field("sla.reliability_target"), "must lie in (0, 1]"));
                }
                if !(q_threshold > 0.0 && q_threshold <= 1.0) {
                    return Err(invalid(&field("sla.q_threshold"), "must lie in (0, 1]"));
                }
            }
        }
        if slice.regime == RegimeName::ShortPacket {
            match slice.error_prob {
                Some(eps) if eps > 0.0 && eps < 1.0 => {}
                _ => {
                    return Err(invalid(
                        &field("error_prob"),
                        "short-packet slices need error_prob in (0, 1)",
                    ));
                }
            }
        }
    }
    // Everything else (channel positivity, per-slice geometry) is enforced by
    // the environment's own validation; surface those errors with the field
    // name it reports.
    build_env_config::<f64>(scenario).map(|_| ())
}

fn build_env_config<R: Real>(scenario: &ScenarioConfig) -> Result<EnvConfig<R>, ConfigError> {
    let channel = ChannelParams::new(
        R::of(dbm_to_watts(scenario.tx_power_dbm)),
        R::of(scenario.rb_bandwidth_hz),
        scenario.num_rbs,
        R::of(dbm_to_watts(scenario.noise_psd_dbm_hz)),
        R::of(scenario.tti_s),
        scenario.pathloss,
        R::of(scenario.shadowing_stddev_db),
        scenario.fading,
    )
    .map_err(|e| invalid("scenario.channel", e.to_string()))?;

    let slices = scenario
        .slices
        .iter()
        .map(|s| -> Result<SliceSpec<R>, ConfigError> {
            let traffic = TrafficModel::new(
                s.traffic.kind,
                R::of(s.traffic.rate_pps),
                R::of(s.traffic.packet_bits),
            )
            .map_err(|e| invalid(&format!("scenario.slices.{}.traffic", s.name), e.to_string()))?;
            let sla = match s.sla {
                SlaSection::Throughput { rate_threshold_bps, q_threshold } => {
                    SlaTarget::Throughput {
                        rate_threshold_bps: R::of(rate_threshold_bps),
                        q_threshold: R::of(q_threshold),
                    }
                }
                SlaSection::DelayReliability { d_max_s, reliability_target, q_threshold } => {
                    SlaTarget::DelayReliability {
                        d_max_s: R::of(d_max_s),
                        reliability_target: R::of(reliability_target),
                        q_threshold: R::of(q_threshold),
                    }
                }
            };
            Ok(SliceSpec {
                name: s.name.clone(),
                num_ues: s.num_ues,
                scheduler: match s.scheduler {
                    SchedulerName::Pf => SchedulerKind::ProportionalFair,
                    SchedulerName::Edf => SchedulerKind::EarliestDeadlineFirst,
                },
                regime: match s.regime {
                    RegimeName::LongPacket => RateRegime::LongPacket,
                    RegimeName::ShortPacket => RateRegime::ShortPacket,
                },
                traffic,
                sla,
                alpha: R::of(s.alpha),
                isolation_threshold: R::of(s.isolation_threshold),
                short_packet_error_prob: s.error_prob.map(R::of),
                random_phase: s.random_phase,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let cfg = EnvConfig {
        channel,
        area_m: R::of(scenario.area_m),
        epoch_ttis: scenario.epoch_ttis,
        epochs_per_episode: scenario.epochs_per_episode,
        slices,
        initial_dedicated: scenario
            .initial_dedicated_rbs
            .clone()
            .expect("resolved before build"),
        initial_common: scenario.initial_common_rbs,
        action_step_sizes: scenario.action_step_sizes.clone(),
        beta: R::of(scenario.beta),
        rho: R::of(scenario.rho),
        hybrid: scenario.hybrid,
        min_dedicated_rbs: scenario.min_dedicated_rbs,
        pf_window_ttis: R::of(scenario.pf_window_ttis),
        pf_rate_floor: R::of(scenario.pf_rate_floor_bits),
        collect_trace: false,
    };
    cfg.validate().map_err(|e| invalid("scenario", e.to_string()))?;
    Ok(cfg)
}
