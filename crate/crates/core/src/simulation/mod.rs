//! Data generators, the likelihood-ratio oracle, and Monte Carlo harnesses.

pub mod generators;
pub mod harness;
pub mod mixture;
pub mod order_stats;
pub mod rng;
pub mod sweep;

use crate::boundaries::BoundaryError;
use crate::contrasts::ContrastError;
use crate::detectors::DetectorError;
use crate::grids::GridError;
use serde::Serialize;
use std::fmt;
use thiserror::Error;

pub use generators::{generate_alternative, generate_null, in_alternative_space, AlternativeSpec, MeanMatrix, RowMean};
pub use harness::{
    estimate_errors, wilson_interval, Experiment, ExperimentConfig, GeneratorSpec, Hypothesis, McErrorReport,
    MixtureFlavor, Proportion, TestKind, Which, SCHEMA_VERSION,
};
pub use mixture::{generate_mixture, likelihood_ratio, lrt_test, preset_beta_bar, MixtureDraw, MixturePrior};
pub use order_stats::{chernoff_bound, empirical_tails, order_stat_cdf};
pub use rng::{child_seed, Domain, TrialStreams};
pub use sweep::{phase_sweep, PhasePlan, PhasePoint};

/// A problem with one configuration key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl ConfigIssue {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

fn join_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    Invalid(String),
    #[error("invalid configuration: {}", join_issues(.0))]
    Config(Vec<ConfigIssue>),
    #[error("likelihood ratio not representable (got {0})")]
    LikelihoodRatioNotRepresentable(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Contrast(#[from] ContrastError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
}
