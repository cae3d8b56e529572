use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("t = {t} outside domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time map not invertible at t = {t}: {reason}")]
    NotInvertible { t: f64, reason: String },

    #[error("finite-time escape: |kappa| exceeded {bound:e} at t = {t}")]
    FiniteEscape { t: f64, bound: f64 },

    #[error("gauge does not reach the target class: max residual {residual:e} > {tol:e}")]
    InvalidGauge { residual: f64, tol: f64 },

    #[error("grid headroom exceeded: {0}")]
    Headroom(String),

    #[error("boundary reflection at t = {t}: edge/peak amplitude ratio {ratio:e}")]
    BoundaryReflection { t: f64, ratio: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported parameter: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotInvertible { .. }
                | Error::FiniteEscape { .. }
                | Error::InvalidGauge { .. }
                | Error::Headroom(_)
                | Error::BoundaryReflection { .. }
                | Error::Numerical(_)
        )
    }
}
