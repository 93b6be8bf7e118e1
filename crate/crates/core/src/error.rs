use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("image {found:?} is smaller than the {window}x{window} window")]
    TooSmall { found: (usize, usize), window: usize },

    #[error("invalid model state: {0}")]
    InvalidState(String),

    #[error("incompatible checkpoint: expected version {expected}, found {found}")]
    IncompatibleCheckpoint { expected: u32, found: u32 },

    #[error("checkpoint parse error: {0}")]
    Parse(String),

    #[error("tuning diverged at iteration {iteration} (loss {loss})")]
    Divergence { iteration: usize, loss: f64 },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Training { epoch: usize, loss: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),
}
