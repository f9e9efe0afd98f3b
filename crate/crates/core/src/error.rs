use std::io;

use crate::gridworld::Cell;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no solvable scenario after {attempts} attempts (density {density} on {width}x{height})")]
    NoSolvableScenario {
        attempts: usize,
        density: f64,
        width: usize,
        height: usize,
    },

    #[error("cell {0} is out of bounds")]
    OutOfBounds(Cell),

    #[error("cell {0} is occupied")]
    CellOccupied(Cell),

    #[error("target {0} is unreachable from the search root")]
    UnreachableTarget(Cell),

    #[error("target {0} was not expanded")]
    TargetNotExpanded(Cell),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("architecture mismatch: expected {expected}, found {found}")]
    ArchitectureMismatch { expected: String, found: String },

    #[error("empty {0} split")]
    EmptySplit(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
