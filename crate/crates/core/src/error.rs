use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid sliding window: {0}")]
    Window(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("no gradient for parameter `{0}`")]
    MissingGrad(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("could not reach invalid ratio {target:.3} within ±{tolerance:.3} after {attempts} attempts")]
    UnreachableRatio {
        target: f64,
        tolerance: f64,
        attempts: usize,
    },

    #[error("training diverged at step {step}: loss is {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}

/// Failures specific to reading a checkpoint file.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: expected \"DMTC\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported checkpoint version {found} (this build reads version {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),

    #[error("tensor `{name}` has shape {found:?}, config expects {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("checkpoint is missing tensor `{0}`")]
    MissingTensor(String),

    #[error("checkpoint has unexpected tensor `{0}`")]
    UnexpectedTensor(String),

    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}
