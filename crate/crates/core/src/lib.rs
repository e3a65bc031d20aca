//! Trust recalibration toolkit.
//!
//! - [`confidence`]: generative model of miscalibrated AI confidence.
//! - [`agent`]: linear-in-log-odds perception with Rescorla-Wagner learning.
//! - [`inference`]: likelihood, hierarchical priors, MAP fitting, MCMC and
//!   convergence diagnostics.
//! - [`metrics`]: behavioural and model-fit statistics, and the report.
//! - [`datastore`]: trial logs and session configuration.

pub mod agent;
pub mod cohort;
pub mod confidence;
pub mod datastore;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod stats;

pub use agent::{AgentParams, AgentState, ResponsePolicy};
pub use confidence::{Condition, ConditionSpec, StimulusPool, TrialStimulus};
pub use datastore::{SessionConfig, SimulatedTrial, TrialRecord};
pub use error::{Error, Result};
