use thiserror::Error;

/// Errors raised across the planning stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate ellipsoid: |det(shape)| = {det:e}")]
    DegenerateEllipsoid { det: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("calibration failure: {0}")]
    CalibrationFailure(String),

    #[error("state outside calibrated range: {0}")]
    Extrapolation(String),

    #[error("reactive maneuver did not reach rest within {time_cap} s")]
    NonConvergentManeuver { time_cap: f64 },

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
