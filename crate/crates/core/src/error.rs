use thiserror::Error;

/// Errors produced by the library. The CLI maps these onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fields are defined on mismatched domains")]
    DomainMismatch,

    #[error("expected {expected} fields for an n={expected} bracket, got {got}")]
    FieldCount { expected: usize, got: usize },

    #[error("unknown field descriptor: {0}")]
    UnknownDescriptor(String),

    #[error("non-periodic expression rejected: {0}")]
    NonPeriodic(String),

    #[error("evaluation sample is empty")]
    EmptySample,

    #[error(
        "voxel size {voxel_size} undersamples the image: require at least {required} \
         (2x the largest adjacent-sample jump)"
    )]
    Undersampled { voxel_size: f64, required: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("collapse construction failed: {0}")]
    Construction(String),

    #[error("certificate violation: {0}")]
    Certificate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
