//! Scoring detector output against scenario labels, and the scenario suite.

mod score;
mod suite;

pub use score::{score, Confusion, EvalReport, EventRow, FeatureScore, Metric, VerdictConfusion};
pub use suite::{
    reference_samples, report_table, run_scenario, run_suite, suite_table, synth_scenario, Method,
    MethodRun, ScenarioName, ScenarioRun, ScenarioSuite, SuiteRow,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("labels and detector output disagree: {0}")]
    RangeMismatch(String),
    #[error("scenario {scenario} (seed {seed}): {message}")]
    Scenario {
        scenario: String,
        seed: u64,
        message: String,
    },
}
