//! High-dimensional changepoint detection: the penalized Berk–Jones scan and
//! max tests over geometric grids, closed-form detection boundaries, and a
//! Monte Carlo harness for mapping the detectable region.

pub mod boundaries;
pub mod contrasts;
pub mod detectors;
pub mod grids;
pub mod numerics;
pub mod simulation;

pub use boundaries::{BoundaryError, BoundaryValue, Calibration, CaseLabel, Regime};
pub use contrasts::{ContrastError, ContrastMatrix, ObservationMatrix, Side};
pub use detectors::{BjScanResult, Detection, DetectorError, TestDecision};
pub use grids::{BaseRule, DeltaRule, Grid, GridError};
pub use numerics::{KlValue, NumericsError, Prob};
pub use simulation::SimError;

/// Any error raised by this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Contrast(#[from] ContrastError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}
