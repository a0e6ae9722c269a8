use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed record. `location` is a 1-based line for text formats or a
    /// byte offset for binary ones.
    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: PathBuf,
        location: Location,
        message: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cloud is empty")]
    EmptyCloud,

    #[error("footprint has zero extent along the {axis} axis")]
    DegenerateFootprint { axis: char },

    #[error("least-squares system is singular: {0}")]
    SingularSystem(String),

    #[error("no valid projection survived the sign test ({invalid} rejected)")]
    EmptyProjection { invalid: usize },

    #[error("no fully known {patch_size}x{patch_size} source patch in the height field")]
    NoValidSourcePatch { patch_size: usize },

    #[error("hole cell ({x}, {y}) received no gradient votes")]
    UncoveredHoleCell { x: usize, y: usize },

    #[error("poisson solver stopped after {iterations} iterations with relative residual {residual:e}")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("hole sampling kept {kept} of {target} points after {draws} draws")]
    HoleCoverageFailure { kept: usize, target: usize, draws: usize },

    #[error("surface tangents are parallel at ({u}, {v})")]
    DegenerateTangent { u: f64, v: f64 },

    #[error("height field has no known cells")]
    NoKnownCells,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Byte(u64),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Byte(b) => write!(f, "byte {b}"),
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, location: Location, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            location,
            message: message.into(),
        }
    }
}
