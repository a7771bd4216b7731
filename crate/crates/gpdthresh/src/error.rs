use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad flags, config-file keys or values.
    #[error("{0}")]
    Usage(String),

    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },

    /// Input that parsed but cannot be modelled (non-positive values, too few rows, ...).
    #[error("{0}")]
    Data(String),

    /// A report or chain file that does not follow its schema.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Model(#[from] gpdthresh_core::Error),
}

/// Broad error class, mapped onto the process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Data,
    Runtime,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Runtime => 1,
            Category::Usage => 2,
            Category::Data => 3,
        }
    }
}

impl Error {
    pub fn category(&self) -> Category {
        use gpdthresh_core::Error as E;
        match self {
            Error::Usage(_) => Category::Usage,
            Error::Read { .. } | Error::Parse { .. } | Error::Data(_) | Error::Format { .. } => {
                Category::Data
            }
            Error::Model(E::InvalidSample(_)) => Category::Data,
            Error::Model(E::InvalidParameter(_)) => Category::Usage,
            Error::Write { .. } | Error::Model(_) => Category::Runtime,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.category().exit_code()
    }
}
