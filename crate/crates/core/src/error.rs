use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvoError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("operator not invertible at z = {z}: {detail}")]
    NotInvertible { z: Complex64, detail: String },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("no positivity certificate: min eigenvalue {value:e} at z = {witness}")]
    NoCertificate { witness: Complex64, value: f64 },
    #[error("no convergence after {iterations} iterations (factor estimate {factor:.3e})")]
    NonConvergence { iterations: usize, factor: f64 },
    #[error("contraction violated: nu = {nu} must exceed Lipschitz bound {lipschitz}")]
    ContractionViolation { nu: f64, lipschitz: f64 },
    #[error("matrix pair is not regular")]
    NotRegular,
    #[error("tolerance conflict: eigenvalue cluster gap ratio {gap:.3e}")]
    ToleranceConflict { gap: f64 },
    #[error("index estimates disagree: normal form gives {weierstrass}, resolvent growth gives {resolvent}")]
    NumericalAmbiguity { weierstrass: usize, resolvent: usize },
    #[error("initial value not consistent (distance {residual:.3e})")]
    InconsistentInitialValue { residual: f64 },
    #[error("degenerate operator: {0}")]
    Degenerate(String),
    #[error("fit window contains near-zero samples")]
    UnderflowWindow,
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),
    #[error("unknown problem id '{0}'")]
    UnknownProblem(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, EvoError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(EvoError::InvalidArgument(msg.into()))
}
