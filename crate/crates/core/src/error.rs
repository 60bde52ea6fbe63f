use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid phase state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("diffusion matrices must be diagonal (off-diagonal entry at ({row}, {col}))")]
    NonDiagonalDiffusion { row: usize, col: usize },

    /// A diffusion entry left the admissible band `[m, M]`, or touched zero.
    #[error("diffusion bound violated: {channel} = {value} at t = {time}")]
    DiffusionBound { channel: String, time: f64, value: f64 },

    #[error("integration blew up at step {step} (|state|_inf = {magnitude:e})")]
    BlowUp { step: usize, magnitude: f64 },

    #[error("unsupported model structure: {0}")]
    UnsupportedStructure(String),

    #[error("model `{0}` does not provide hessian blocks")]
    MissingHessian(String),

    #[error("action is not finite")]
    NonFiniteAction,

    #[error("not enough data: {0}")]
    InsufficientData(String),
}
