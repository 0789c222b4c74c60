use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("extinction ratio must be >= 1, got {0}")]
    InvalidExtinction(f64),
    #[error("element list is empty")]
    EmptyElements,
    #[error("Werner mixing parameter must lie in [0, 1], got {0}")]
    InvalidMixing(f64),
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("conditional probability requested but the herald probability is zero")]
    Unheraldable,
    #[error("theta grid is empty")]
    EmptyGrid,
    #[error("theta grid must be strictly increasing within [0, 180) degrees")]
    InvalidGrid,
    #[error("dataset has no strictly positive value to normalize by")]
    AllZeroDataset,
    #[error("at least 2 runs are required, got {0}")]
    TooFewRuns(usize),
    #[error("invalid count model: {0}")]
    InvalidCountModel(String),
    #[error("detector efficiency is zero")]
    ZeroEfficiency,
    #[error("incomplete tomography record set: {0}")]
    IncompleteRecords(String),
    #[error("all tomography counts are zero")]
    ZeroCounts,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("at least 2 kept samples are required, got {0}")]
    TooFewKept(usize),
    #[error("at least 2 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("non-physical Mueller matrix cannot be simulated")]
    NonPhysicalMueller,
    #[error("invalid optimization config: {0}")]
    InvalidConfig(String),
}
