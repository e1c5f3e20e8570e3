use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("state space too large for exact enumeration: {0}")]
    StateSpaceTooLarge(String),

    #[error("proposal assigns zero probability to current word {0}")]
    ZeroProposal(usize),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unknown word: {0}")]
    UnknownWord(String),

    #[error("malformed file at byte {offset}: {reason}")]
    Malformed { offset: u64, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Short stable tag used by the CLI for machine-parseable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDistribution(_) => "invalid_distribution",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::StateSpaceTooLarge(_) => "state_space_too_large",
            Error::ZeroProposal(_) => "zero_proposal",
            Error::Empty(_) => "empty_input",
            Error::Config(_) => "config",
            Error::UnknownWord(_) => "unknown_word",
            Error::Malformed { .. } => "malformed_file",
            Error::Io(_) => "io",
        }
    }
}
