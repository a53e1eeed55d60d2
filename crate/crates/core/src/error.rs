use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("capacity exceeded: {what} needs {requested} bytes, limit is {limit} bytes")]
    Capacity {
        what: &'static str,
        requested: u128,
        limit: u64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("qubit {qubit} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("block size {block} does not divide layer count {layers}")]
    Divisibility { block: usize, layers: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidArgument(msg.into())
}

pub(crate) fn mismatch(expected: impl ToString, actual: impl ToString) -> SimError {
    SimError::DimensionMismatch {
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
