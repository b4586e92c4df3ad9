use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation (invalid pose, bad parameter).
    #[error("domain error: {0}")]
    Domain(String),

    /// The closed-form contact force solve would divide by `mu_A * A_x - A_y ~ 0`.
    #[error("singular configuration: denominator {denominator:e} within tolerance")]
    SingularConfiguration { denominator: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("problem build failed: {0}")]
    Build(String),

    /// A solver iterate was unpacked but failed a physical invariant.
    #[error("rejected solution: {constraint} violated at step {step} (residual {residual:e})")]
    RejectedSolution {
        constraint: String,
        step: usize,
        residual: f64,
    },

    #[error("solve failed: {0}")]
    Solve(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
