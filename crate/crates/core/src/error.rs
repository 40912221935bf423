use thiserror::Error;

pub type Result<T> = std::result::Result<T, IpmError>;

#[derive(Debug, Error)]
pub enum IpmError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite (quadratic form {value:e})")]
    NotPositiveDefinite { value: f64 },

    #[error("Cholesky factorization failed at pivot {pivot} (value {value:e})")]
    Factorization { pivot: usize, value: f64 },

    #[error("SVD did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    SvdNonConvergence { sweeps: usize, residual: f64 },

    #[error(
        "constraint matrix is rank deficient (sigma_min/sigma_max = {ratio:e}); \
         use the dual or low-rank reduction first"
    )]
    RankDeficient { ratio: f64 },

    #[error("iterate left the interior: {which}[{index}] = {value:e}")]
    LeftInterior {
        which: &'static str,
        index: usize,
        value: f64,
    },

    #[error("(dy, v) pair does not satisfy the modified normal equations: residual {residual:e} > {tolerance:e}")]
    InconsistentPair { residual: f64, tolerance: f64 },

    #[error("sketch width {w} exceeds the number of rows {n}")]
    SketchTooWide { w: usize, n: usize },

    #[error("iterative solver did not reach its target in {iterations} iterations (last residual {last:e})")]
    ConvergenceFailure {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("conjugate gradient breakdown at iteration {iteration} (curvature {curvature:e})")]
    CgBreakdown { iteration: usize, curvature: f64 },

    #[error("starting point is outside N2({theta}): distance {distance:e} > {bound:e}")]
    InvalidStart {
        theta: f64,
        distance: f64,
        bound: f64,
    },

    #[error("monitor violated at outer iteration {iteration}: {what}")]
    MonitorViolation { iteration: usize, what: String },

    #[error("rank mismatch: expected {expected} independent rows, found {found}")]
    RankMismatch { expected: usize, found: usize },

    #[error("degenerate least-squares fit: {0}")]
    DegenerateFit(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(IpmError::Dimension {
            context,
            expected,
            found,
        })
    }
}
