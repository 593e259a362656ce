use thiserror::Error;

use crate::data::Cell;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty cell")]
    EmptyCell,

    #[error("non-finite outcome at position {0}")]
    NonFinite(usize),

    #[error("cell labels do not match: expected {expected}, got {found}")]
    CellMismatch { expected: Cell, found: Cell },

    #[error("k = {k} out of range for a cell of size {n} (need 1 <= k <= n - 1)")]
    KOutOfRange { k: usize, n: usize },

    #[error("non-positive threshold: apply a transform or reduce k")]
    NonPositiveThreshold,

    #[error("degenerate ties at threshold")]
    DegenerateTies,

    #[error("probability level {0} is outside the admissible range")]
    InvalidLevel(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("transform {transform} is not admissible: {reason}")]
    InadmissibleTransform {
        transform: &'static str,
        reason: &'static str,
    },

    #[error("degenerate sample for bandwidth")]
    DegenerateBandwidth,

    #[error("vanishing density at evaluation point")]
    VanishingDensity,

    #[error("non-positive counterfactual quantile")]
    NonPositiveCounterfactual,

    #[error("non-finite value in {0}")]
    NonFiniteResult(&'static str),

    #[error("cell {cell}: {source}")]
    InCell { cell: Cell, source: Box<Error> },

    #[error("failure rate {rate:.3} at q = {q} exceeds the 20% limit (last error: {last_error})")]
    ExcessiveFailures {
        q: f64,
        rate: f64,
        last_error: String,
    },

    #[error("could not draw four non-empty cells after {0} attempts")]
    EmptyCellsInSimulation(usize),

    #[error("missing column: {0}")]
    MissingColumn(&'static str),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("{0}")]
    Csv(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn in_cell(self, cell: Cell) -> Self {
        Error::InCell {
            cell,
            source: Box::new(self),
        }
    }

    /// The innermost error, with any cell context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::InCell { source, .. } => source.root(),
            other => other,
        }
    }
}
