use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed Y4M stream: {0}")]
    Y4m(String),
    #[error("malformed PGM image: {0}")]
    Pgm(String),
    #[error("truncated frame payload: frame {frame} needs {needed} bytes, {available} available")]
    Truncated {
        frame: usize,
        needed: usize,
        available: usize,
    },
    #[error("byte count {len} is not a multiple of the frame size {frame_size}")]
    RawSize { len: usize, frame_size: usize },
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("coordinate ({0}, {1}) outside the projection area")]
    OutOfRange(usize, usize),
    #[error("basis index ({0}, {1}) out of range")]
    BasisIndex(usize, usize),
    #[error("sequence too short: {0} frame(s), at least {1} required")]
    SequenceTooShort(usize, usize),
    #[error("rate-distortion curve: {0}")]
    Curve(String),
    #[error("BD-rate fit failed: {0}")]
    Fit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
