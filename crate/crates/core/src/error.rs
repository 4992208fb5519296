use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::scenario::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing field `{field}` in section [{section}]")]
    MissingField {
        field: &'static str,
        section: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("scenario failed validation:\n{}", ViolationList(.0))]
    Invalid(Vec<Violation>),

    #[error("policy uses edge {i}->{j} at t={t} where the population policy has zero probability")]
    LogOfZero { t: usize, i: usize, j: usize },

    #[error("invalid grid world: {0}")]
    Grid(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{}: {source}", .path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::File {
            path: path.to_path_buf(),
            source,
        }
    }
}

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {v}")?;
        }
        Ok(())
    }
}
