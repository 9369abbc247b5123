//! Desk-scale federated-learning simulation with label-flipping attackers.

pub mod attack;
pub mod bound;
pub mod config;
pub mod data;
pub mod model;
pub mod output;
mod runner;

pub use attack::{attack_success_rate, flip_labels, AttackConfig, ATTACKER_CAP};
pub use bound::{weight_bound_check, weight_bound_threshold, BoundReport, Role};
pub use config::{CsvSource, DatasetConfig, EncryptScope, ExperimentConfig, Mode, RosterMode};
pub use data::{load_csv, parse_csv, shard_iid, synthetic, Dataset, SyntheticSpec};
pub use model::{local_train, Architecture, Model, ModelState};
pub use output::{metrics_csv, timings_csv, write_atomic, AggregateSummary};
pub use runner::{run_experiment, RoundMetrics, RunSummary, Simulation, StageTimings};
