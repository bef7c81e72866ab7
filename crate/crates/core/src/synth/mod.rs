//! Synthetic legitimate traffic and labeled scenarios.
//!
//! Legitimate traffic is generated in two steps: a diurnal profile yields
//! 15-minute aggregates, which are then resampled to one-second counts with a
//! truncated Poisson draw for Msg3 and a Bernoulli failure draw for Msg5.
//! Scenarios slice the trace into fixed periods and overlay attack or
//! high-load episodes on some of them.

mod profile;
mod resample;
mod scenario;

pub use profile::{synth_baseline, DiurnalProfile, Peak};
pub use resample::{failure_probability, resample_msg3, resample_msg5, BIN_SECONDS};
pub use scenario::{
    build_scenario, LabelKind, RatePolicy, Scenario, ScenarioConfig, ScenarioLabel, ScriptedEpisode,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::storm::StormError;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error(transparent)]
    Storm(#[from] StormError),
}

/// One 15-minute aggregate as a gNB reports it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateBin {
    pub start: i64,
    pub msg3_total: u64,
    pub msg5_total: u64,
    pub n_bue_avg: f64,
}

/// One second of gNB observables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficSample {
    pub ts: i64,
    pub msg3: u32,
    pub msg5: u32,
    pub n_bue: u32,
}
