//! Reproducibility: every run is a pure function of `(config, seed)`.

use slicesim_core::harness::config::{Algorithm, ExperimentConfig, Profile, ResolvedConfig};
use slicesim_core::harness::{eval_run, nvs_run, oracle_run, train_run};

/// Desk profile shrunk for fast determinism checks.
fn tiny_resolved(algorithm: Algorithm) -> ResolvedConfig {
    let mut experiment: ExperimentConfig = toml::from_str(Profile::Desk.toml_text()).unwrap();
    experiment.algorithm = algorithm;
    experiment.scenario.epochs_per_episode = 10;
    experiment.train.episodes = 2;
    experiment.train.batch_size = 8;
    experiment.train.eps_decay_epochs = Some(10);
    experiment.oracle.grid_step = 6;
    experiment.seeds = vec![31, 32];
    ResolvedConfig::from_experiment(experiment).unwrap()
}

#[test]
fn training_runs_are_byte_identical() {
    let resolved = tiny_resolved(Algorithm::Proposed);
    let a = train_run(&resolved, 31).unwrap();
    let b = train_run(&resolved, 31).unwrap();
    assert_eq!(a.log.to_csv_string(), b.log.to_csv_string());
    assert_eq!(a.checkpoint, b.checkpoint);
    assert_eq!(a.stats_csv, b.stats_csv);

    let c = train_run(&resolved, 32).unwrap();
    assert_ne!(a.log.to_csv_string(), c.log.to_csv_string());
}

#[test]
fn hard_dqn_runs_are_byte_identical() {
    let resolved = tiny_resolved(Algorithm::HardDqn);
    let a = train_run(&resolved, 31).unwrap();
    let b = train_run(&resolved, 31).unwrap();
    assert_eq!(a.log.to_csv_string(), b.log.to_csv_string());
}

#[test]
fn static_and_oracle_runs_are_byte_identical() {
    let nvs = tiny_resolved(Algorithm::Nvs);
    let a = nvs_run(&nvs, 31).unwrap();
    let b = nvs_run(&nvs, 31).unwrap();
    assert_eq!(a.log.to_csv_string(), b.log.to_csv_string());

    let op = tiny_resolved(Algorithm::Op);
    let c = oracle_run(&op, 31).unwrap();
    let d = oracle_run(&op, 31).unwrap();
    assert_eq!(c.log.to_csv_string(), d.log.to_csv_string());
    assert_eq!(c.audit_csv, d.audit_csv);
}

#[test]
fn eval_from_checkpoint_is_byte_identical_and_greedy() {
    let resolved = tiny_resolved(Algorithm::Proposed);
    let trained = train_run(&resolved, 31).unwrap();
    let checkpoint = trained.checkpoint.as_deref().unwrap();
    let a = eval_run(&resolved, 31, checkpoint).unwrap();
    let b = eval_run(&resolved, 31, checkpoint).unwrap();
    assert_eq!(a.log.to_csv_string(), b.log.to_csv_string());
    // Greedy evaluation differs from the exploring training trajectory.
    assert_ne!(a.log.to_csv_string(), trained.log.to_csv_string());
}
