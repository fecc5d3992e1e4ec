//! `slicesim`: train, evaluate, and compare slicing allocators on the
//! simulated downlink scenario described by a TOML config.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result, bail};
use clap::{Args, Parser, Subcommand, ValueEnum};

use slicesim_core::harness::{
    Algorithm, Profile, ResolvedConfig, RunOutput, compare, eval_run, load_config, nvs_run,
    oracle_run, sweep, sweep_summary_csv, train_run, write_outputs,
};
use slicesim_core::harness::runlog::RunLog;

/// Environment variable overriding the output directory.
const OUT_ENV: &str = "SLICESIM_OUT";

#[derive(Parser)]
#[command(
    name = "slicesim",
    version,
    about = "Downlink RAN slicing simulator: hybrid hard/soft resource pools, \
             a DQN slicing agent, and static/exhaustive baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the DQN slicing agent (`proposed` or `hard-dqn`).
    Train(RunArgs),
    /// Evaluate a checkpoint (greedy policy) or the static `nvs` baseline.
    Eval(EvalArgs),
    /// Exhaustive-search static oracle over the allocation grid.
    Oracle(OracleArgs),
    /// Align and diff run logs recorded over the same scenario.
    Compare(CompareArgs),
    /// Run every seed in the config and aggregate the summaries.
    Sweep(RunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ProfileArg {
    Paper,
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    Proposed,
    HardDqn,
    Nvs,
    Op,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Proposed => Algorithm::Proposed,
            AlgorithmArg::HardDqn => Algorithm::HardDqn,
            AlgorithmArg::Nvs => Algorithm::Nvs,
            AlgorithmArg::Op => Algorithm::Op,
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config; omit to use a bundled profile.
    #[arg(long, conflicts_with = "profile")]
    config: Option<PathBuf>,
    /// Bundled scenario profile.
    #[arg(long, value_enum, default_value = "paper")]
    profile: ProfileArg,
    /// Override the config's algorithm.
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    /// Override the config's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config's out_dir; SLICESIM_OUT wins over
    /// the config, --out wins over both).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ResolvedConfig> {
        let mut resolved = match &self.config {
            Some(path) => load_config(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => match self.profile {
                ProfileArg::Paper => Profile::Paper.load()?,
                ProfileArg::Desk => Profile::Desk.load()?,
            },
        };
        let mut experiment = resolved.experiment.clone();
        let mut dirty = false;
        if let Some(algorithm) = self.algorithm {
            experiment.algorithm = algorithm.into();
            dirty = true;
        }
        if let Some(seed) = self.seed {
            experiment.seeds = vec![seed];
            dirty = true;
        }
        if dirty {
            resolved = ResolvedConfig::from_experiment(experiment)?;
        }
        Ok(resolved)
    }

    fn out_dir(&self, resolved: &ResolvedConfig) -> PathBuf {
        if let Some(out) = &self.out {
            return out.clone();
        }
        if let Ok(env_dir) = std::env::var(OUT_ENV) {
            return PathBuf::from(env_dir);
        }
        PathBuf::from(&resolved.experiment.out_dir)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Checkpoint produced by `train`; required unless the algorithm is `nvs`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Override the allocation grid step.
    #[arg(long)]
    grid_step: Option<u32>,
}

#[derive(Args)]
struct CompareArgs {
    /// Two or more runlog.csv paths over the same scenario.
    #[arg(required = true, num_args = 2..)]
    logs: Vec<PathBuf>,
    /// Directory for the aligned comparison CSV.
    #[arg(long, default_value = "runs/compare")]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn finish(output: &RunOutput, dir: &Path) -> Result<()> {
    let written = write_outputs(output, dir)?;
    print!("{}", output.summary.to_text());
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_train(args: RunArgs) -> Result<()> {
    let resolved = args.config.resolve()?;
    if !matches!(resolved.experiment.algorithm, Algorithm::Proposed | Algorithm::HardDqn) {
        bail!(
            "train needs algorithm `proposed` or `hard-dqn` (got `{}`); \
             use `eval` or `oracle` for the baselines",
            resolved.experiment.algorithm.name()
        );
    }
    let seed = resolved.experiment.seeds[0];
    let output = train_run(&resolved, seed)?;
    finish(&output, &args.config.out_dir(&resolved))
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let resolved = args.config.resolve()?;
    let seed = resolved.experiment.seeds[0];
    let output = match resolved.experiment.algorithm {
        Algorithm::Nvs => nvs_run(&resolved, seed)?,
        Algorithm::Op => bail!("use the `oracle` subcommand for the exhaustive search"),
        Algorithm::Proposed | Algorithm::HardDqn => {
            let path = args
                .checkpoint
                .as_ref()
                .context("--checkpoint is required to evaluate a trained policy")?;
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading checkpoint {}", path.display()))?;
            eval_run(&resolved, seed, &text)?
        }
    };
    finish(&output, &args.config.out_dir(&resolved))
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let mut resolved = args.config.resolve()?;
    if let Some(step) = args.grid_step {
        let mut experiment = resolved.experiment.clone();
        experiment.oracle.grid_step = step;
        experiment.algorithm = Algorithm::Op;
        resolved = ResolvedConfig::from_experiment(experiment)?;
    } else if resolved.experiment.algorithm != Algorithm::Op {
        let mut experiment = resolved.experiment.clone();
        experiment.algorithm = Algorithm::Op;
        resolved = ResolvedConfig::from_experiment(experiment)?;
    }
    let seed = resolved.experiment.seeds[0];
    let output = oracle_run(&resolved, seed)?;
    finish(&output, &args.config.out_dir(&resolved))
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let logs: Vec<RunLog> = args
        .logs
        .iter()
        .map(|path| -> Result<RunLog> {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading run log {}", path.display()))?;
            Ok(RunLog::parse(&text)?)
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&RunLog> = logs.iter().collect();
    let report = compare(&refs)?;
    std::fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("compare.csv");
    std::fs::write(&csv_path, &report.csv)?;
    print!("{}", report.summary);
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn cmd_sweep(args: RunArgs) -> Result<()> {
    let resolved = args.config.resolve()?;
    let outputs = sweep(&resolved)?;
    let root = args.config.out_dir(&resolved);
    for output in &outputs {
        let dir = root.join(format!("seed{}", output.summary.seed));
        write_outputs(output, &dir)?;
        println!(
            "seed {}: converged mean reward {:.6}",
            output.summary.seed, output.summary.converged_mean_reward
        );
    }
    std::fs::create_dir_all(&root)?;
    let summary_path = root.join("sweep_summary.csv");
    std::fs::write(&summary_path, sweep_summary_csv(&outputs))?;
    println!("wrote {}", summary_path.display());
    Ok(())
}
