//! Label-efficient exponentially weighted forecasters.
//!
//! The forecaster predicts a binary sequence from the advice of `N` experts
//! and, each round, decides at random whether to pay for the true label. The
//! query probability is derived from the weighted agreement of the experts so
//! that the worst-case expected regret of the full-information forecaster is
//! preserved while far fewer labels are collected in benign environments.
//!
//! Modules:
//! - [`forecaster`]: the state machine (agreement, prediction, query, update).
//! - [`sampling`]: the optimal query probability `q*` and its closed-form bound.
//! - [`environments`]: scripted, threshold-noise and gap environments.
//! - [`oracle`]: exact expected losses on tiny instances.
//! - [`harness`]: Monte Carlo experiments with confidence bands.

pub mod environments;
pub mod error;
pub mod forecaster;
pub mod harness;
pub mod oracle;
pub mod sampling;

pub use environments::{
    enumerate_adversarial, Environment, GapEnv, GapEnvConfig, LabelSource, Round, ScriptedEnv,
    ThresholdEnv, ThresholdEnvConfig,
};
pub use error::{Error, Result};
pub use forecaster::{ForecasterState, RoundRecord, SamplingStrategy, Step};
pub use harness::{ExperimentConfig, MetricsSeries};
pub use oracle::ExactResult;
