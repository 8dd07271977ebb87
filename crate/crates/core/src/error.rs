use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("constraint Jacobian is rank deficient (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}); constraint qualification violated")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("singular KKT matrix{}", fmt_iteration(.iteration))]
    SingularKkt { iteration: Option<usize> },

    #[error("iterate diverged at iteration {iteration} (norm {norm:e})")]
    Diverged { iteration: usize, norm: f64 },

    #[error("unknown problem `{name}`; available: {}", .available.join(", "))]
    UnknownProblem {
        name: String,
        available: Vec<&'static str>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("deterministic SQP oracle did not converge in {iterations} iterations (residual {residual:e})")]
    OracleFailed { iterations: usize, residual: f64 },

    #[error("no known solution available for problem `{0}`")]
    OracleUnavailable(String),

    #[error("degenerate direction: w^T Xi w = {0:e} is not positive")]
    DegenerateDirection(f64),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("{0}")]
    Io(String),
}

fn fmt_iteration(iteration: &Option<usize>) -> String {
    match iteration {
        Some(t) => format!(" at iteration {t}"),
        None => String::new(),
    }
}
