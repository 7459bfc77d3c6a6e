use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Times carried by evaluation errors are the `(s, t)` pair that was being
/// evaluated, with `s` the earlier (source) instant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("positivity violation at (s={s}, t={t}): diagonal entry {value} outside [0, 1]")]
    Positivity { s: f64, t: f64, value: f64 },

    #[error("degenerate source at (s={s}, t={t}): source measure is uniform")]
    DegenerateSource { s: f64, t: f64 },

    #[error("source s={s} lies outside the family's domain (t={t})")]
    OutsideDomain { s: f64, t: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("capacity exceeded: {n} grid points > n_max = {n_max}")]
    Capacity { n: usize, n_max: usize },

    #[error("index {index} out of range for grid of {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("conditional undefined: state {state} at time index {index} has zero probability")]
    UndefinedConditional { state: u8, index: usize },

    #[error("empirical estimate undefined: state {state} at time index {index} never occurs (occupancy {counts:?})")]
    EmptyCell {
        state: u8,
        index: usize,
        counts: [usize; 2],
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

impl Error {
    /// The `(s, t)` pair carried by evaluation failures, if any.
    pub fn witness(&self) -> Option<(f64, f64)> {
        match *self {
            Error::Positivity { s, t, .. }
            | Error::DegenerateSource { s, t }
            | Error::OutsideDomain { s, t } => Some((s, t)),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
