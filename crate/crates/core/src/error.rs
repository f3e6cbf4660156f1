use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("metric is degenerate: {0}")]
    MetricDegeneracy(String),

    #[error("configuration is inside no-go region `{region}` (distance {distance:e})")]
    InsideRegion { region: String, distance: f64 },

    #[error("direction vector is degenerate (norm {norm:e})")]
    DegenerateDirection { norm: f64 },

    #[error("matrix is rank deficient; pseudo-inverse needs damping > 0")]
    RankDeficient,

    #[error("link index {index} out of range for chain with {links} links")]
    InvalidLink { index: usize, links: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("no feasible initialization after {restarts} restarts")]
    InfeasibleInit { restarts: usize },

    #[error("optimization stalled at iteration {iteration}: energy {energy:e}, gradient norm {gradient_norm:e}")]
    OptimizationStalled {
        iteration: usize,
        energy: f64,
        gradient_norm: f64,
    },

    #[error("segment {segment}: {source}")]
    Segment {
        segment: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("goal unreachable: final residual {residual:e} m after {iterations} iterations")]
    UnreachableGoal { residual: f64, iterations: usize },

    #[error("scenario schema error: {0}")]
    Schema(String),

    #[error("scenario validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
