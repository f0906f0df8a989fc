//! Experiment orchestration, scripted testers and reporting.

mod experiment;
pub mod metrics;
mod report;
pub mod testers;

pub use experiment::*;
pub use report::*;

use thiserror::Error;

use crate::agents::AgentError;
use crate::fixtures::FixtureError;
use crate::irl::IrlError;
use crate::oracle::{FaultError, OracleError};
use crate::scenario::ScenarioError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("tester log is empty")]
    EmptyLog,
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Irl(#[from] IrlError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Fault(#[from] FaultError),
}
