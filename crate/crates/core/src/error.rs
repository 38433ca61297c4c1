use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid {field}: {msg}")]
    Invalid { field: String, msg: String },

    #[error("index ({row}, {col}) outside {rows}x{cols} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("block ({block_row}, {block_col}) outside {blocks_down}x{blocks_across} partition")]
    BlockOutOfRange {
        block_row: usize,
        block_col: usize,
        blocks_down: usize,
        blocks_across: usize,
    },

    #[error("frequency {0} MHz is not part of the scenario")]
    UnknownFrequency(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{0}")]
    Empty(&'static str),

    #[error("backward called before any forward pass was recorded")]
    NoForward,

    #[error("rank-deficient least-squares design: {0}")]
    RankDeficient(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad input data rather than by the environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
