//! Experiment orchestration: configuration, replicas, aggregation, sweeps
//! and the statistical verification suite.

pub mod aggregate;
pub mod config;
pub mod sim;
pub mod sweep;
pub mod verify;

pub use aggregate::{run_experiment, summarize, ExperimentResult, MeanSe, RoundSummary, CSV_HEADER};
pub use config::{ExperimentConfig, Method, Scenario, Topology};
pub use sim::{run_replica, AgentSummary, MetricsRow, ReplicaResult};
pub use sweep::sweep;
pub use verify::{verify, VerificationParams, VerifyReport};
