use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,

    #[error("length mismatch: {left} vs {right} samples")]
    LengthMismatch { left: usize, right: usize },

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    RateMismatch { left: f64, right: f64 },

    #[error("invalid sample rate {0} Hz")]
    InvalidRate(f64),

    #[error("zero-power {0} cannot be scaled to a finite SNR")]
    ZeroPower(&'static str),

    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),

    #[error("signal length {len} is not divisible by 2^{levels}; pad the signal first")]
    UnalignedLength { len: usize, levels: usize },

    #[error("decomposition level count {0} outside [1, 8]")]
    LevelsOutOfRange(usize),

    #[error("scale {scale} outside [1, {levels}]")]
    ScaleOutOfRange { scale: usize, levels: usize },

    #[error("unknown wavelet '{name}'; available: {available}")]
    UnknownWavelet { name: String, available: String },

    #[error("negative threshold {0}")]
    NegativeThreshold(f64),

    #[error("median window of {window} samples exceeds sequence length {len}")]
    WindowTooLong { window: usize, len: usize },

    #[error("unknown method '{0}'")]
    UnknownMethod(String),

    #[error("invalid filter band: {0}")]
    InvalidBand(String),

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical integration diverged at sample {index} (config: {config})")]
    Diverged { index: usize, config: String },

    #[error("need at least 2 R-peaks, got {0}")]
    TooFewPeaks(usize),

    #[error("no R-peaks detected: {0}")]
    NoPeaks(String),

    #[error("empty interval set")]
    EmptyIntervals,

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::InvalidConfig(message.into())
    }
}
