//! Run logs: a stable CSV schema with a commented header carrying the
//! artifact version, config hashes, and the full resolved config for audit.
//! Two runs with the same config and seed produce byte-identical files.

use thiserror::Error;

use crate::env::StepInfo;
use crate::real::Real;

pub const RUNLOG_SCHEMA: &str = "slicesim-runlog v1";

#[derive(Debug, Error, PartialEq)]
pub enum RunLogError {
    #[error("unknown run log schema: {0}")]
    UnknownSchema(String),
    #[error("malformed run log: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("compare needs at least two run logs")]
    NeedTwoLogs,
    #[error("scenario hash mismatch: {0} vs {1}; runs are not comparable")]
    ScenarioMismatch(String, String),
    #[error("run logs are misaligned: {0}")]
    Misaligned(String),
    #[error(transparent)]
    RunLog(#[from] RunLogError),
}

/// Header metadata of a run log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLogMeta {
    pub artifact_version: String,
    pub scenario_hash: String,
    pub config_hash: String,
    pub algorithm: String,
    pub seed: u64,
    pub s_max: f64,
}

/// Per-slice columns of one epoch row.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SliceCols {
    pub dedicated_rbs: u32,
    pub q_sla: f64,
    pub isolation: f64,
    pub utilization: f64,
    pub common_used_mean: f64,
}

/// One `(episode, epoch)` row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLogRow {
    pub episode: u64,
    pub epoch: u64,
    pub action_index: usize,
    pub projected: bool,
    pub reward: f64,
    pub spectral_eff: f64,
    pub s_normalized: f64,
    pub utility: f64,
    pub common_rbs: u32,
    pub slices: Vec<SliceCols>,
}

impl RunLogRow {
    pub fn from_step_info<R: Real>(info: &StepInfo<R>, reward: R) -> Self {
        Self {
            episode: info.episode,
            epoch: info.epoch,
            action_index: info.action_index,
            projected: info.projected,
            reward: reward.to_f64_lossy(),
            spectral_eff: info.stats.spectral_eff.to_f64_lossy(),
            s_normalized: info.stats.s_normalized.to_f64_lossy(),
            utility: info.stats.utility.to_f64_lossy(),
            common_rbs: info.allocation.common,
            slices: info
                .stats
                .per_slice
                .iter()
                .map(|s| SliceCols {
                    dedicated_rbs: s.dedicated_rbs,
                    q_sla: s.q_sla.to_f64_lossy(),
                    isolation: s.isolation.to_f64_lossy(),
                    utilization: s.utilization.to_f64_lossy(),
                    common_used_mean: s.common_used_mean.to_f64_lossy(),
                })
                .collect(),
        }
    }
}

/// A complete run log: metadata, the echoed config, and the epoch rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub meta: RunLogMeta,
    /// Resolved config TOML exactly as echoed in the header.
    pub config_echo: String,
    pub rows: Vec<RunLogRow>,
}

impl RunLog {
    /// Serializes the whole log. Floats use Rust's shortest round-trip
    /// formatting, so equal values always produce equal bytes.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {RUNLOG_SCHEMA}\n"));
        out.push_str(&format!("# artifact_version={}\n", self.meta.artifact_version));
        out.push_str(&format!("# scenario_hash={}\n", self.meta.scenario_hash));
        out.push_str(&format!("# config_hash={}\n", self.meta.config_hash));
        out.push_str(&format!("# algorithm={}\n", self.meta.algorithm));
        out.push_str(&format!("# seed={}\n", self.meta.seed));
        out.push_str(&format!("# s_max={}\n", self.meta.s_max));
        out.push_str("# config:\n");
        for line in self.config_echo.lines() {
            out.push_str("#   ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("# end-config\n");
        out.push_str(&self.header_row());
        out.push('\n');
        for row in &self.rows {
            out.push_str(&self.format_row(row));
            out.push('\n');
        }
        out
    }

    fn num_slices(&self) -> usize {
        self.rows.first().map_or(0, |r| r.slices.len())
    }

    fn header_row(&self) -> String {
        let mut cols = vec![
            "episode".to_string(),
            "epoch".to_string(),
            "action_index".to_string(),
            "projected".to_string(),
            "reward".to_string(),
            "spectral_eff".to_string(),
            "s_normalized".to_string(),
            "utility".to_string(),
            "common_rbs".to_string(),
        ];
        for i in 0..self.num_slices() {
            cols.push(format!("w{i}"));
            cols.push(format!("q{i}"));
            cols.push(format!("o{i}"));
            cols.push(format!("mu{i}"));
            cols.push(format!("cu{i}"));
        }
        cols.join(",")
    }

    fn format_row(&self, row: &RunLogRow) -> String {
        let mut cols = vec![
            row.episode.to_string(),
            row.epoch.to_string(),
            row.action_index.to_string(),
            u8::from(row.projected).to_string(),
            row.reward.to_string(),
            row.spectral_eff.to_string(),
            row.s_normalized.to_string(),
            row.utility.to_string(),
            row.common_rbs.to_string(),
        ];
        for s in &row.slices {
            cols.push(s.dedicated_rbs.to_string());
            cols.push(s.q_sla.to_string());
            cols.push(s.isolation.to_string());
            cols.push(s.utilization.to_string());
            cols.push(s.common_used_mean.to_string());
        }
        cols.join(",")
    }

    pub fn parse(text: &str) -> Result<Self, RunLogError> {
        let mut lines = text.lines().peekable();
        match lines.next() {
            Some(line) if line == format!("# {RUNLOG_SCHEMA}") => {}
            Some(other) => return Err(RunLogError::UnknownSchema(other.to_string())),
            None => return Err(RunLogError::Malformed("empty file".into())),
        }
        let mut meta = RunLogMeta::default();
        let mut config_echo = String::new();
        let mut in_config = false;
        for line in lines.by_ref() {
            if !line.starts_with('#') {
                return Err(RunLogError::Malformed(format!("unexpected row in header: {line}")));
            }
            let body = line.trim_start_matches('#').trim_start();
            if in_config {
                if body == "end-config" {
                    break;
                }
                config_echo.push_str(line.strip_prefix("#   ").unwrap_or(body));
                config_echo.push('\n');
                continue;
            }
            if body == "config:" {
                in_config = true;
            } else if let Some((key, value)) = body.split_once('=') {
                match key {
                    "artifact_version" => meta.artifact_version = value.to_string(),
                    "scenario_hash" => meta.scenario_hash = value.to_string(),
                    "config_hash" => meta.config_hash = value.to_string(),
                    "algorithm" => meta.algorithm = value.to_string(),
                    "seed" => {
                        meta.seed = value
                            .parse()
                            .map_err(|_| RunLogError::Malformed(format!("bad seed {value}")))?;
                    }
                    "s_max" => {
                        meta.s_max = value
                            .parse()
                            .map_err(|_| RunLogError::Malformed(format!("bad s_max {value}")))?;
                    }
                    _ => {}
                }
            }
        }
        let header = lines
            .next()
            .ok_or_else(|| RunLogError::Malformed("missing column header".into()))?;
        let num_cols = header.split(',').count();
        if num_cols < 9 || (num_cols - 9) % 5 != 0 {
            return Err(RunLogError::Malformed(format!("unexpected column count {num_cols}")));
        }
        let num_slices = (num_cols - 9) / 5;
        let mut rows = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != num_cols {
                return Err(RunLogError::Malformed(format!(
                    "row has {} fields, expected {num_cols}",
                    fields.len()
                )));
            }
            let parse_f = |s: &str| -> Result<f64, RunLogError> {
                s.parse().map_err(|_| RunLogError::Malformed(format!("bad float {s}")))
            };
            let parse_u = |s: &str| -> Result<u64, RunLogError> {
                s.parse().map_err(|_| RunLogError::Malformed(format!("bad integer {s}")))
            };
            let mut slices = Vec::with_capacity(num_slices);
            for i in 0..num_slices {
                let base = 9 + i * 5;
                slices.push(SliceCols {
                    dedicated_rbs: parse_u(fields[base])? as u32,
                    q_sla: parse_f(fields[base + 1])?,
                    isolation: parse_f(fields[base + 2])?,
                    utilization: parse_f(fields[base + 3])?,
                    common_used_mean: parse_f(fields[base + 4])?,
                });
            }
            rows.push(RunLogRow {
                episode: parse_u(fields[0])?,
                epoch: parse_u(fields[1])?,
                action_index: parse_u(fields[2])? as usize,
                projected: fields[3] == "1",
                reward: parse_f(fields[4])?,
                spectral_eff: parse_f(fields[5])?,
                s_normalized: parse_f(fields[6])?,
                utility: parse_f(fields[7])?,
                common_rbs: parse_u(fields[8])? as u32,
                slices,
            });
        }
        Ok(Self { meta, config_echo, rows })
    }

    /// Mean reward over the last 10% of rows (at least one).
    pub fn converged_mean_reward(&self) -> f64 {
        converged_mean(&self.rewards())
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.reward).collect()
    }

    pub fn label(&self) -> String {
        format!("{}-seed{}", self.meta.algorithm, self.meta.seed)
    }
}

/// Mean of the last 10% of a series (at least one element).
pub fn converged_mean(series: &[f64]) -> f64 {
    if series.is_empty() {
        return f64::NAN;
    }
    let tail = (series.len().div_ceil(10)).max(1);
    let slice = &series[series.len() - tail..];
    slice.iter().sum::<f64>() / slice.len() as f64
}

/// Aligned comparison of several runs over the same scenario.
#[derive(Clone, Debug)]
pub struct CompareReport {
    pub labels: Vec<String>,
    /// Converged mean reward per log, in input order.
    pub converged: Vec<f64>,
    /// `converged[i] - converged[0]` for each log.
    pub deltas: Vec<f64>,
    /// Plot-ready CSV: `row,episode,epoch,reward_<label>...`.
    pub csv: String,
    pub summary: String,
}

pub fn compare(logs: &[&RunLog]) -> Result<CompareReport, CompareError> {
    if logs.len() < 2 {
        return Err(CompareError::NeedTwoLogs);
    }
    let scenario = &logs[0].meta.scenario_hash;
    for log in &logs[1..] {
        if &log.meta.scenario_hash != scenario {
            return Err(CompareError::ScenarioMismatch(
                scenario.clone(),
                log.meta.scenario_hash.clone(),
            ));
        }
    }
    let rows = logs.iter().map(|l| l.rows.len()).min().unwrap_or(0);
    if rows == 0 {
        return Err(CompareError::Misaligned("a run log has no rows".into()));
    }
    for log in logs {
        for (i, row) in log.rows[..rows].iter().enumerate() {
            let anchor = &logs[0].rows[i];
            if (row.episode, row.epoch) != (anchor.episode, anchor.epoch) {
                return Err(CompareError::Misaligned(format!(
                    "row {i}: ({}, {}) vs ({}, {})",
                    row.episode, row.epoch, anchor.episode, anchor.epoch
                )));
            }
        }
    }

    let labels: Vec<String> = logs.iter().map(|l| l.label()).collect();
    let mut csv = String::from("row,episode,epoch");
    for label in &labels {
        csv.push_str(&format!(",reward_{label}"));
    }
    csv.push('\n');
    for i in 0..rows {
        let anchor = &logs[0].rows[i];
        csv.push_str(&format!("{i},{},{}", anchor.episode, anchor.epoch));
        for log in logs {
            csv.push_str(&format!(",{}", log.rows[i].reward));
        }
        csv.push('\n');
    }

    let converged: Vec<f64> = logs
        .iter()
        .map(|l| converged_mean(&l.rewards()[..rows.min(l.rows.len())]))
        .collect();
    let deltas: Vec<f64> = converged.iter().map(|c| c - converged[0]).collect();
    let mut summary = String::new();
    summary.push_str(&format!("compared {} runs over scenario {scenario}\n", logs.len()));
    for ((label, c), d) in labels.iter().zip(&converged).zip(&deltas) {
        summary.push_str(&format!(
            "  {label}: converged mean reward {c:.6} (delta vs {}: {d:+.6})\n",
            labels[0]
        ));
    }
    Ok(CompareReport { labels, converged, deltas, csv, summary })
}
