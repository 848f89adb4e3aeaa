use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid fixed-point format: {bits} total bits, {frac} fractional bits")]
    InvalidFormat { bits: u32, frac: u32 },

    #[error("raw value {raw} out of range for a {bits}-bit format")]
    RawOutOfRange { raw: i64, bits: u32 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operand formats differ: Q{}.{} vs Q{}.{}", .0.0, .0.1, .1.0, .1.1)]
    FormatMismatch((u32, u32), (u32, u32)),

    #[error("accumulator overflow: {width}-bit accumulator cannot hold the sum")]
    AccumulatorOverflow { width: u32 },

    #[error("leading-zero bound undefined for a zero operand")]
    ZeroOperand,

    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("simulator stream already drained; reset before streaming a new tile")]
    StreamDrained,

    #[error("engine mismatch: {0}")]
    EngineMismatch(String),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
