use thiserror::Error;

use crate::kernel::ApproxInterval;

/// Errors produced while building inputs or running the kernel engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("simplex {simplex:?} is missing its face {missing:?}")]
    FaceClosure { simplex: Vec<u32>, missing: Vec<u32> },

    #[error("critical point ({x}, {y}) of simplex {simplex:?} is not above any critical point of face {face:?}")]
    Monotonicity {
        simplex: Vec<u32>,
        face: Vec<u32>,
        x: f64,
        y: f64,
    },

    #[error("simplex {0:?} has an empty critical set")]
    EmptyCriticalSet(Vec<u32>),

    #[error("simplex {0:?} appears more than once")]
    DuplicateSimplex(Vec<u32>),

    #[error("invalid simplex {0:?}: vertices must be non-empty and strictly increasing")]
    InvalidSimplex(Vec<u32>),

    #[error("unknown simplex {0:?}")]
    UnknownSimplex(Vec<u32>),

    #[error("non-finite coordinate in {0}")]
    NonFinite(String),

    #[error("points ({p1}, {p2}) and ({q1}, {q2}) are not strictly ordered")]
    NotStrictlyOrdered { p1: f64, p2: f64, q1: f64, q2: f64 },

    #[error("point ({0}, {1}) does not lie on the slice")]
    NotOnLine(f64, f64),

    #[error("invalid slice: {0}")]
    InvalidLine(String),

    #[error("evaluation point ({0}, {1}) is not strictly above the diagonal")]
    BelowDiagonal(f64, f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("box pair is not good")]
    NotGood,

    #[error(
        "resolution cap {max_depth} reached with interval [{}, {}] (width {})",
        best.lo, best.hi, best.width()
    )]
    ResolutionCap {
        max_depth: u32,
        best: ApproxInterval,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
