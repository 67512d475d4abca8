use thiserror::Error;

/// Errors raised by the simulator core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EthError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not unitary: ||U*U - 1||_op = {residual:.3e} exceeds {tolerance:.1e}")]
    NotUnitary { residual: f64, tolerance: f64 },

    #[error("matrix is not Hermitian: ||A - A*||_op = {residual:.3e} exceeds {tolerance:.1e}")]
    NotHermitian { residual: f64, tolerance: f64 },

    #[error("not a density matrix: {0}")]
    NotDensity(String),

    #[error("not an orthogonal projection: residual {residual:.3e} exceeds {tolerance:.1e}")]
    NotProjection { residual: f64, tolerance: f64 },

    #[error("Hermitian eigensolver did not converge (reconstruction residual {residual:.3e})")]
    EigenNonConvergence { residual: f64 },

    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("requested {requested} steps but the field sequence horizon is {horizon}")]
    HorizonExceeded { requested: usize, horizon: usize },

    #[error("dimension {dim} exceeds the configured cap {cap}")]
    CapExceeded { dim: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invariant `{invariant}` violated: {detail}")]
    InvariantViolation { invariant: &'static str, detail: String },
}

impl EthError {
    pub(crate) fn invariant(invariant: &'static str, detail: impl Into<String>) -> Self {
        EthError::InvariantViolation {
            invariant,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, EthError>;
