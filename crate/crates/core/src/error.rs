use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The correlation matrix could not be factorized. `pair` names the two
    /// most strongly correlated distinct designs, which are usually duplicates
    /// modulo a cyclic shift.
    #[error("singular correlation matrix (designs {} and {} are near-duplicates, correlation {correlation:.12})", pair.0, pair.1)]
    SingularCorrelation {
        pair: (usize, usize),
        correlation: f64,
    },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("graphical lasso did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("fit failed on every restart: {0}")]
    Fit(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
