use thiserror::Error;

/// Errors raised by the close-evaluation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate curve: jacobian {jacobian:e} at t = {t}")]
    DegenerateCurve { t: f64, jacobian: f64 },

    #[error("degenerate surface: area element {area:e} at (theta, phi) = ({theta}, {phi})")]
    DegenerateSurface { theta: f64, phi: f64, area: f64 },

    #[error("invalid spherical harmonic index (n = {n}, m = {m})")]
    InvalidHarmonic { n: usize, m: i64 },

    #[error("kernel evaluated at coincident points (|y_d| = {distance:e})")]
    Coincident { distance: f64 },

    #[error("source point {0:?} is not strictly outside the boundary")]
    SourceNotExterior(Vec<f64>),

    #[error("evaluation point {0:?} lies outside the domain")]
    PointOutside(Vec<f64>),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("linear system is singular or could not be solved")]
    SingularMatrix,

    #[error("order fit needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
