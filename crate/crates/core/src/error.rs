use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes disagree. `detail` names the offending dimension.
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A precondition of a specialized kernel or operator does not hold.
    #[error("{op}: contract violation: {detail}")]
    Contract { op: &'static str, detail: String },

    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    InvalidConfig(Vec<String>),

    #[error(transparent)]
    Weights(#[from] WeightsError),

    #[error("preprocess: {0}")]
    Preprocess(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Failures reading or writing a weight file.
#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("bad magic {0:?}, expected \"XUGT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported weight file version {0} (expected 1)")]
    UnsupportedVersion(u32),
    #[error("truncated file header")]
    TruncatedHeader,
    #[error("truncated tensor {0}")]
    TruncatedTensor(String),
    #[error("tensor {name}: shape mismatch, config expects {expected:?}, file has {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor {0} in file is not part of the model")]
    UnknownTensor(String),
    #[error("tensor {0} missing from file")]
    MissingTensor(String),
    #[error("tensor {0} appears more than once")]
    DuplicateTensor(String),
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("digest mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    DigestMismatch { stored: u64, computed: u64 },
    #[error("{0} unexpected trailing bytes after digest")]
    TrailingBytes(usize),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }
}
