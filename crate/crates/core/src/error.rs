use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid size {0}: modes per axis must be even and between 8 and 16384")]
    InvalidGrid(usize),

    #[error("grid mismatch: {left} vs {right} modes per axis")]
    GridMismatch { left: usize, right: usize },

    #[error("path mismatch: {0}")]
    PathMismatch(String),

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("field has a nonzero mean mode, so the power {0} of the Stokes operator is undefined")]
    NonzeroMean(f64),

    #[error("unsupported Lebesgue exponent {0}: only 2 and 4 are available")]
    UnsupportedExponent(f64),

    #[error("time {time} lies outside [0, {horizon}]")]
    TimeOutOfRange { time: f64, horizon: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Picard iteration did not reach tolerance within {iterations} iterations on subinterval {segment} (last ratios {ratios:?})")]
    NonConvergence {
        segment: usize,
        iterations: usize,
        ratios: Vec<f64>,
    },

    #[error("Picard iteration diverged on subinterval {segment}: contraction ratio {ratio} above the admissible cap (history {ratios:?})")]
    Divergence {
        segment: usize,
        ratio: f64,
        ratios: Vec<f64>,
    },

    #[error("no admissible subinterval starting at t = {start}: two steps already give {value} > M/2 = {bound}; the time step is too coarse")]
    StepTooCoarse { start: f64, value: f64, bound: f64 },

    #[error("non-finite state at t = {0}")]
    BlowUp(f64),

    #[error("audit failed: {0}")]
    AuditFailed(String),

    #[error("path {index} (seed {seed:#x}) failed: {source}")]
    PathFailed {
        index: usize,
        seed: u64,
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
