use thiserror::Error;

/// Errors raised across the engine and the verification lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("derivative order unavailable: {family} kernel supports |w| <= {max}, got |w| = {order}")]
    DerivativeUnavailable {
        family: &'static str,
        order: usize,
        max: usize,
    },

    #[error("singular grid: points {0} and {1} coincide")]
    SingularGrid(usize, usize),

    #[error("decomposition failed: {0}")]
    DecompositionFailed(String),

    #[error("kernel too ill-conditioned: factorization failed with jitter {jitter:e}")]
    IllConditioned { jitter: f64 },

    #[error("truncation level {level} out of range 1..={max}")]
    TruncationOutOfRange { level: usize, max: usize },

    #[error("projection system is rank deficient ({rank} of {nodes}); increase ridge")]
    IncreaseRidge { rank: usize, nodes: usize },

    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("empty design")]
    EmptyDesign,

    #[error("grid too coarse: {points} points per axis, need at least {required}")]
    GridTooCoarse { points: usize, required: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("design not sorted at index {0}")]
    UnsortedDesign(usize),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
