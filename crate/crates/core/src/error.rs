use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Energy at or below the potential maximum; only δ < 1 is supported.
    #[error("above-barrier only: need 0 <= delta < 1, got delta = {delta}")]
    AboveBarrierOnly { delta: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape evaluated too close to its pole near z = {re} + {im}i")]
    PoleProximity { re: f64, im: f64 },

    #[error("tabulated potentials are real-axis only (requested z = {re} + {im}i)")]
    ComplexOnTabulated { re: f64, im: f64 },

    #[error("z = {z} lies outside the tabulated grid [{lo}, {hi}]")]
    OutsideGrid { z: f64, lo: f64, hi: f64 },

    #[error("complex argument inside the tapered ends of a Fourier series (Re z = {re})")]
    TaperNotAnalytic { re: f64 },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("operation not supported for family {0}")]
    UnsupportedFamily(&'static str),

    #[error("step control failed near z = {last_z}: {reason}")]
    StepControl { last_z: f64, reason: String },

    #[error("quadrature did not converge (achieved error {achieved:e}, requested {requested:e})")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("branch tracking of sqrt(1 - delta U) failed between s = {from} and s = {to}")]
    BranchTracking { from: f64, to: f64 },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{failed} of {total} realizations failed; first failure: {first}")]
    EnsembleFailure {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures, as opposed to invalid physical or configuration input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::PoleProximity { .. }
                | Error::StepControl { .. }
                | Error::Quadrature { .. }
                | Error::BranchTracking { .. }
                | Error::EnsembleFailure { .. }
        )
    }
}
