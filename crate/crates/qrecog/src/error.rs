use thiserror::Error;

/// Errors raised by the simulator and the pipelines built on it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not a projector (deviation {0:.3e})")]
    NotProjector(f64),
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("invalid register layout: {0}")]
    Layout(String),
    #[error("state width {0} exceeds the simulator cap of {1} qubits")]
    WidthCap(usize, usize),
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("code {code} is outside the code space of size {size}")]
    InvalidCode { code: u64, size: u64 },
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("promise violated: {0}")]
    Promise(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid sparsity profile: {0}")]
    Profile(String),
    #[error("missing frequency table entry for coarse index {0}")]
    MissingTableEntry(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
