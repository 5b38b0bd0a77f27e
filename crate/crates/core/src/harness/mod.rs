//! Experiment plumbing: configuration files, seeded Monte Carlo sweeps,
//! aggregate metrics and report files.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod report;

pub use config::{load_config, read_config, DesignTag, RoadsideConfig, Scenario, SimConfig, Sweep};
pub use experiment::{run_experiment, run_experiment_with, run_trial, ExperimentReport, PointSummary, Provenance, TrialOutcome};
pub use metrics::{empirical_cdf, mean_and_stderr, nmse, nmse_single, to_db, EmpiricalCdf};
pub use report::emit_report;
