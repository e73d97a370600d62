use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid needs at least 2 cells per axis, got {0}")]
    InvalidGrid(usize),

    #[error("field has {found} nodes, grid expects {expected}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("{what} constraint violated (defect {defect:e})")]
    ConstraintViolated { what: &'static str, defect: f64 },

    #[error("fixed-point iteration did not converge after {0} iterations")]
    NonConvergence(usize),

    #[error("reconstruction norm degenerated to {min_norm:e}")]
    DegenerateNorm { min_norm: f64 },

    #[error("time-step smallness condition violated (max (A^u)^2 + tau B^u = {worst})")]
    SmallnessViolated { worst: f64 },

    #[error("time step {tau:e} would fall below tau_min = {tau_min:e}")]
    StepFloor { tau: f64, tau_min: f64 },

    #[error("time grids of the compared trajectories do not nest: {0}")]
    TimeMismatch(String),

    #[error("error values must be positive for an order estimate (got {0:e}, {1:e})")]
    NonPositiveError(f64, f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
