//! Multi-agent tabular reinforcement learning with differentially private
//! advising.
//!
//! Agents learn independently with Q-learning and an incremental policy, and
//! may ask one another for advice. Advice is the adviser's Q-vector for the
//! closest state it has visited; when that state is a neighbor (L1 distance
//! one) rather than the advisee's own state, the values are perturbed with
//! Laplace noise of scale `delta_q / epsilon` before use. Two baselines (no
//! advising, same-state action advising) and two benchmark worlds (grid
//! target collection, load balancing) are included, along with a seeded,
//! replica-parallel experiment harness.
//!
//! The learning and advising code is generic over [`Scalar`] (`f32`/`f64`);
//! the aliases below fix the common instantiations.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advising;
pub mod agent;
pub mod baselines;
pub mod env;
pub mod error;
pub mod harness;
pub mod learning;
pub mod num;
pub mod numerics;

pub use error::{Error, Result};
pub use num::Scalar;

pub type QTable64 = learning::QTable<f64>;
pub type QTable32 = learning::QTable<f32>;
pub type PolicyTable64 = learning::PolicyTable<f64>;
pub type PolicyTable32 = learning::PolicyTable<f32>;
pub type LearnerParams64 = learning::LearnerParams<f64>;
pub type AdvisingParams64 = advising::AdvisingParams<f64>;
pub type Advice64 = advising::Advice<f64>;
pub type Agent64 = agent::Agent<f64>;
pub type Agent32 = agent::Agent<f32>;
pub type LaplaceScale64 = numerics::LaplaceScale<f64>;
