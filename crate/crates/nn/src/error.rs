use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("backward called on a node that was never recorded")]
    NoForward,
    #[error("backward requires a scalar (1x1) loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint layer `{name}`: expected shape {expected_rows}x{expected_cols}, found {rows}x{cols}")]
    CheckpointShape {
        name: String,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
