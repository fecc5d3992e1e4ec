//! Experiment orchestration: training runs, static baseline runs, the
//! exhaustive-search oracle, checkpoint evaluation, and multi-seed sweeps.
//!
//! Every run is a pure function of `(config, seed)`; file output happens
//! separately in [`write_outputs`].

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::agent::{AgentError, DqnAgent, QNetwork, Transition, epsilon_at};
use crate::baselines::{
    BaselineError, NvsWeights, OpSearchResult, SearchGrid, nvs_alloc, hard_dqn_config, op_search,
};
use crate::env::{Allocation, EnvConfig, EnvError, SimEnv, SlicingAction, StepInfo};
use crate::harness::config::{Algorithm, ConfigError, ResolvedConfig};
use crate::harness::runlog::{RunLog, RunLogMeta, RunLogRow, converged_mean};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("cannot write outputs: {0}")]
    Io(#[from] std::io::Error),
    #[error("algorithm {0} is not trainable; use eval or oracle instead")]
    NotTrainable(String),
}

/// Per-slice digest of a finished run.
#[derive(Clone, Debug)]
pub struct SliceSummary {
    pub name: String,
    /// Fraction of epochs with `Q >= q_threshold`.
    pub q_satisfied_fraction: f64,
    pub mean_q: f64,
    /// Mean isolation over the last 10% of epochs.
    pub final_isolation: f64,
}

/// Digest of a finished run, echoed to `summary.txt` and stdout.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub algorithm: String,
    pub seed: u64,
    pub epochs: usize,
    pub converged_mean_reward: f64,
    pub slices: Vec<SliceSummary>,
    pub s_max: f64,
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("algorithm: {}\n", self.algorithm));
        out.push_str(&format!("seed: {}\n", self.seed));
        out.push_str(&format!("epochs: {}\n", self.epochs));
        out.push_str(&format!("converged_mean_reward: {:.6}\n", self.converged_mean_reward));
        out.push_str(&format!("s_max: {:.6}\n", self.s_max));
        for s in &self.slices {
            out.push_str(&format!(
                "slice {}: q_satisfied_fraction={:.4} mean_q={:.4} final_isolation={:.4}\n",
                s.name, s.q_satisfied_fraction, s.mean_q, s.final_isolation
            ));
        }
        out
    }
}

/// Everything a run produces, in memory.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub log: RunLog,
    pub summary: RunSummary,
    /// Final network checkpoint (training runs only).
    pub checkpoint: Option<String>,
    /// Oracle candidate audit CSV (`op` runs only).
    pub audit_csv: Option<String>,
    /// Per-(episode, epoch, slice) stats CSV with a global row per epoch.
    pub stats_csv: String,
}

/// Dispatches a single run of the configured algorithm with `seed`.
/// `op` evaluates its whole grid (all config seeds) and logs the winner.
pub fn run(resolved: &ResolvedConfig, seed: u64) -> Result<RunOutput, HarnessError> {
    match resolved.experiment.algorithm {
        Algorithm::Proposed | Algorithm::HardDqn => train_run(resolved, seed),
        Algorithm::Nvs => nvs_run(resolved, seed),
        Algorithm::Op => oracle_run(resolved, seed),
    }
}

/// One run per configured seed (the oracle runs once; it is multi-seed by
/// construction). Outputs come back in seed order.
pub fn sweep(resolved: &ResolvedConfig) -> Result<Vec<RunOutput>, HarnessError> {
    if resolved.experiment.algorithm == Algorithm::Op {
        let seed = resolved.experiment.seeds[0];
        return Ok(vec![oracle_run(resolved, seed)?]);
    }
    resolved.experiment.seeds.iter().map(|&seed| run(resolved, seed)).collect()
}

/// Aggregate CSV over sweep outputs: one row per run.
pub fn sweep_summary_csv(outputs: &[RunOutput]) -> String {
    let mut csv = String::from("algorithm,seed,epochs,converged_mean_reward");
    if let Some(first) = outputs.first() {
        for s in &first.summary.slices {
            csv.push_str(&format!(",q_frac_{0},final_iso_{0}", s.name));
        }
    }
    csv.push('\n');
    for out in outputs {
        csv.push_str(&format!(
            "{},{},{},{}",
            out.summary.algorithm, out.summary.seed, out.summary.epochs,
            out.summary.converged_mean_reward
        ));
        for s in &out.summary.slices {
            csv.push_str(&format!(",{},{}", s.q_satisfied_fraction, s.final_isolation));
        }
        csv.push('\n');
    }
    csv
}

fn env_config_for(resolved: &ResolvedConfig) -> Result<EnvConfig<f64>, HarnessError> {
    let cfg = resolved.env_config::<f64>()?;
    Ok(match resolved.experiment.algorithm {
        Algorithm::HardDqn => hard_dqn_config(&cfg),
        _ => cfg,
    })
}

/// Trains the DQN agent on the configured environment (`proposed` keeps the
/// hybrid common pool, `hard-dqn` disables it) and logs every epoch.
pub fn train_run(resolved: &ResolvedConfig, seed: u64) -> Result<RunOutput, HarnessError> {
    let algorithm = resolved.experiment.algorithm;
    if !matches!(algorithm, Algorithm::Proposed | Algorithm::HardDqn) {
        return Err(HarnessError::NotTrainable(algorithm.name().to_string()));
    }
    let env_cfg = env_config_for(resolved)?;
    let train_cfg = resolved.train_config::<f64>();
    let num_slices = env_cfg.slices.len();
    let total_rbs = env_cfg.total_rbs();
    let mut env = SimEnv::new(env_cfg, seed)?;
    let space = env.action_space().clone();
    let mut agent = DqnAgent::new(4 * num_slices, space.joint_count(), train_cfg.clone(), seed);

    let episodes = resolved.experiment.train.episodes;
    let k = resolved.experiment.scenario.epochs_per_episode;
    let mut rows = Vec::with_capacity((episodes * k) as usize);
    let mut stats = StatsCsv::new(resolved);
    let mut global_epoch = 0u64;
    for episode in 0..episodes {
        let mut obs = env.reset(episode)?;
        for epoch in 1..=k {
            let eps = epsilon_at(&train_cfg, global_epoch);
            let features = obs.features(total_rbs);
            let action_index = agent.act(&features, eps);
            let action = space.decode(action_index);
            let (next_obs, reward, info) = env.step(&action)?;
            agent.observe(Transition {
                state: features,
                action: action_index,
                reward,
                next_state: next_obs.features(total_rbs),
                terminal: epoch == k,
            });
            for _ in 0..train_cfg.train_steps_per_epoch {
                agent.train_tick();
            }
            stats.push(&info);
            rows.push(RunLogRow::from_step_info(&info, reward));
            obs = next_obs;
            global_epoch += 1;
        }
    }

    let checkpoint = agent.net.to_checkpoint(agent.train_steps());
    Ok(assemble(resolved, seed, env.s_max(), rows, Some(checkpoint), None, stats))
}

/// Greedy rollout of a checkpointed network; no exploration, no training.
pub fn eval_run(
    resolved: &ResolvedConfig,
    seed: u64,
    checkpoint_text: &str,
) -> Result<RunOutput, HarnessError> {
    let (net, _steps) = QNetwork::<f64>::from_checkpoint(checkpoint_text)?;
    let env_cfg = env_config_for(resolved)?;
    let total_rbs = env_cfg.total_rbs();
    let mut env = SimEnv::new(env_cfg, seed)?;
    let space = env.action_space().clone();

    let episodes = resolved.experiment.train.episodes;
    let k = resolved.experiment.scenario.epochs_per_episode;
    let mut rows = Vec::new();
    let mut stats = StatsCsv::new(resolved);
    for episode in 0..episodes {
        let mut obs = env.reset(episode)?;
        for _epoch in 1..=k {
            let features = obs.features(total_rbs);
            let q = net.forward(&features)?;
            let action_index = crate::agent::greedy_action(&q);
            let (next_obs, reward, info) = env.step(&space.decode(action_index))?;
            stats.push(&info);
            rows.push(RunLogRow::from_step_info(&info, reward));
            obs = next_obs;
        }
    }
    Ok(assemble(resolved, seed, env.s_max(), rows, None, None, stats))
}

/// Static weight-based slicing: the allocation never changes.
pub fn nvs_run(resolved: &ResolvedConfig, seed: u64) -> Result<RunOutput, HarnessError> {
    let weights_f64 = resolved.nvs_weights();
    let weights = NvsWeights::new(&weights_f64)?;
    let base = resolved.env_config::<f64>()?;
    let alloc = nvs_alloc(&weights, base.total_rbs());
    static_run(resolved, seed, alloc, None)
}

/// Exhaustive static search over the configured grid and seeds, then a
/// logged run of the winning allocation. The candidate audit CSV records
/// every `(candidate, seed)` evaluation.
pub fn oracle_run(resolved: &ResolvedConfig, seed: u64) -> Result<RunOutput, HarnessError> {
    let base = resolved.env_config::<f64>()?;
    let grid = SearchGrid::new(resolved.experiment.oracle.grid_step);
    let result = op_search(&base, &grid, &resolved.experiment.seeds)?;
    let audit = audit_csv(&result);
    let mut out = static_run(resolved, seed, result.winner.clone(), Some(audit))?;
    out.summary.algorithm = Algorithm::Op.name().to_string();
    Ok(out)
}

fn audit_csv(result: &OpSearchResult<f64>) -> String {
    let mut csv = String::from("candidate_dedicated,candidate_common,seed,mean_utility,mean_reward\n");
    for row in &result.audit {
        let dedicated =
            row.allocation.dedicated.iter().map(u32::to_string).collect::<Vec<_>>().join("/");
        csv.push_str(&format!(
            "{dedicated},{},{},{},{}\n",
            row.allocation.common, row.seed, row.mean_utility, row.mean_reward
        ));
    }
    let winner_dedicated =
        result.winner.dedicated.iter().map(u32::to_string).collect::<Vec<_>>().join("/");
    csv.push_str(&format!(
        "winner,{winner_dedicated},{},{},{}\n",
        result.winner.common, result.mean_utility, result.mean_reward
    ));
    csv
}

/// Runs a fixed allocation for the configured horizon, logging every epoch.
pub fn static_run(
    resolved: &ResolvedConfig,
    seed: u64,
    alloc: Allocation,
    audit_csv: Option<String>,
) -> Result<RunOutput, HarnessError> {
    let mut env_cfg = resolved.env_config::<f64>()?;
    env_cfg.initial_dedicated = alloc.dedicated.clone();
    env_cfg.initial_common = alloc.common;
    let num_slices = env_cfg.slices.len();
    let mut env = SimEnv::new(env_cfg, seed)?;
    let noop = SlicingAction::noop(num_slices);

    let episodes = resolved.experiment.train.episodes;
    let k = resolved.experiment.scenario.epochs_per_episode;
    let mut rows = Vec::new();
    let mut stats = StatsCsv::new(resolved);
    for episode in 0..episodes {
        env.reset(episode)?;
        for _epoch in 1..=k {
            let (_obs, reward, info) = env.step(&noop)?;
            stats.push(&info);
            rows.push(RunLogRow::from_step_info(&info, reward));
        }
    }
    Ok(assemble(resolved, seed, env.s_max(), rows, None, audit_csv, stats))
}

fn assemble(
    resolved: &ResolvedConfig,
    seed: u64,
    s_max: f64,
    rows: Vec<RunLogRow>,
    checkpoint: Option<String>,
    audit_csv: Option<String>,
    stats: StatsCsv,
) -> RunOutput {
    let log = RunLog {
        meta: RunLogMeta {
            artifact_version: crate::VERSION.to_string(),
            scenario_hash: resolved.scenario_hash.clone(),
            config_hash: resolved.config_hash.clone(),
            algorithm: resolved.experiment.algorithm.name().to_string(),
            seed,
            s_max,
        },
        config_echo: resolved.canonical_toml.clone(),
        rows,
    };
    let summary = summarize(resolved, &log, s_max);
    RunOutput { log, summary, checkpoint, audit_csv, stats_csv: stats.finish() }
}

fn summarize(resolved: &ResolvedConfig, log: &RunLog, s_max: f64) -> RunSummary {
    let scenario = &resolved.experiment.scenario;
    let n = log.rows.len();
    let tail = n.div_ceil(10).max(1);
    let slices = scenario
        .slices
        .iter()
        .enumerate()
        .map(|(i, slice)| {
            let q_threshold = match slice.sla {
                super::config::SlaSection::Throughput { q_threshold, .. } => q_threshold,
                super::config::SlaSection::DelayReliability { q_threshold, .. } => q_threshold,
            };
            let qs: Vec<f64> = log.rows.iter().map(|r| r.slices[i].q_sla).collect();
            let satisfied = qs.iter().filter(|&&q| q >= q_threshold).count();
            let final_iso = if n == 0 {
                f64::NAN
            } else {
                log.rows[n - tail..].iter().map(|r| r.slices[i].isolation).sum::<f64>()
                    / tail as f64
            };
            SliceSummary {
                name: slice.name.clone(),
                q_satisfied_fraction: if n == 0 { f64::NAN } else { satisfied as f64 / n as f64 },
                mean_q: if n == 0 { f64::NAN } else { qs.iter().sum::<f64>() / n as f64 },
                final_isolation: final_iso,
            }
        })
        .collect();
    RunSummary {
        algorithm: resolved.experiment.algorithm.name().to_string(),
        seed: log.meta.seed,
        epochs: n,
        converged_mean_reward: converged_mean(&log.rewards()),
        slices,
        s_max,
    }
}

/// Builder for the per-(episode, epoch, slice) stats CSV. Slice rows leave
/// the global columns empty; the global row leaves the slice columns empty.
struct StatsCsv {
    names: Vec<String>,
    body: String,
}

impl StatsCsv {
    fn new(resolved: &ResolvedConfig) -> Self {
        Self {
            names: resolved.experiment.scenario.slices.iter().map(|s| s.name.clone()).collect(),
            body: String::from(
                "episode,epoch,scope,dedicated_rbs,common_used_mean,q_sla,isolation,\
                 utilization,spectral_eff,s_normalized,utility\n",
            ),
        }
    }

    fn push(&mut self, info: &StepInfo<f64>) {
        for (name, s) in self.names.iter().zip(&info.stats.per_slice) {
            self.body.push_str(&format!(
                "{},{},{name},{},{},{},{},{},,,\n",
                info.episode, info.epoch, s.dedicated_rbs, s.common_used_mean, s.q_sla,
                s.isolation, s.utilization
            ));
        }
        self.body.push_str(&format!(
            "{},{},global,,,,,,{},{},{}\n",
            info.episode, info.epoch, info.stats.spectral_eff, info.stats.s_normalized,
            info.stats.utility
        ));
    }

    fn finish(self) -> String {
        self.body
    }
}

/// Writes a run's artifacts into `dir`, returning the created paths.
pub fn write_outputs(output: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, contents: &str| -> Result<(), HarnessError> {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    emit("runlog.csv", &output.log.to_csv_string())?;
    emit("epoch_stats.csv", &output.stats_csv)?;
    emit("summary.txt", &output.summary.to_text())?;
    if let Some(checkpoint) = &output.checkpoint {
        emit("checkpoint.txt", checkpoint)?;
    }
    if let Some(audit) = &output.audit_csv {
        emit("op_audit.csv", audit)?;
    }
    Ok(written)
}
