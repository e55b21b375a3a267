//! Experiment driver behind the `hankel-nullspace` binary: dataset generation,
//! aggregation, moment recovery, validation against the model oracle and
//! convergence sweeps. Every command writes plain files (JSONL, JSON, CSV)
//! plus a run manifest that can be fed back as a config.

use std::fmt;

pub mod commands;
pub mod config;

pub use commands::{Input, Manifest, Outcome};
pub use config::ExperimentConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_NO_CANDIDATE: u8 = 2;
pub const EXIT_INVALID_CONFIG: u8 = 3;
pub const EXIT_IO: u8 = 4;

/// Raised for configurations rejected before any output is written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidConfig(pub String);

impl fmt::Display for InvalidConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for InvalidConfig {}

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use hankel_nullspace::Error as E;
    for cause in err.chain() {
        if cause.is::<InvalidConfig>() {
            return EXIT_INVALID_CONFIG;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidArgument(_) | E::Infeasible(_) => EXIT_INVALID_CONFIG,
                E::Io(_) | E::Format(_) | E::Json(_) => EXIT_IO,
                _ => EXIT_FAILURE,
            };
        }
    }
    EXIT_FAILURE
}

pub fn outcome_code(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::Done => EXIT_OK,
        Outcome::NoCandidate => EXIT_NO_CANDIDATE,
    }
}
