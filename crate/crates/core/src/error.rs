use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("malformed WAV data: {0}")]
    MalformedWav(String),
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("signal too short: need {needed} samples, have {available}")]
    TooShort { needed: usize, available: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("loss node is not scalar (shape {0:?})")]
    NonScalarLoss(alloc::vec::Vec<usize>),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("calibration insufficient: language {0} has no true positives")]
    CalibrationInsufficient(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("degenerate class {0}: needs both positive and negative samples")]
    DegenerateClass(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;
