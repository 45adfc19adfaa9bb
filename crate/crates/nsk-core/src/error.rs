//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("field is not real-valued (Hermitian residual {residual:.3e})")]
    NotRealValued { residual: f64 },

    #[error("invalid Lebesgue exponent p = {0}; need p >= 1 (or infinity)")]
    InvalidExponent(f64),

    #[error("empty dyadic band: {0}")]
    EmptyBand(String),

    #[error("degenerate time quadrature: {0}")]
    DegenerateQuadrature(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index constraint violated: {0}")]
    IndexConstraint(String),

    #[error("zero sound speed required: P'(rho_star) = {0:.3e}")]
    NonzeroSoundSpeed(f64),

    #[error("oscillatory regime: {0}")]
    OscillatoryRegime(String),

    #[error("vacuum guard tripped: min(1 + a) = {min_density:.3e} at t = {time}")]
    Vacuum { min_density: f64, time: f64 },

    #[error("non-finite value at t = {time}: {context}")]
    NonFinite { time: f64, context: String },

    #[error(
        "Gevrey amplification overflow at mode {mode:?}: tau * |xi|_1 = {exponent:.3e} > 700 \
         (largest admissible tau = {max_tau:.6e})"
    )]
    GevreyOverflow {
        mode: [i64; 3],
        exponent: f64,
        max_tau: f64,
    },

    #[error("smallness precondition violated: {0}")]
    SmallnessViolated(String),

    #[error("box too small for the requested horizon: need box_length >= {needed:.4e}, have {have:.4e}")]
    BoxTooSmall { needed: f64, have: f64 },

    #[error("archive error: {0}")]
    Archive(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
