use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension { context: &'static str, expected: usize, actual: usize },
    #[error("non-finite {what} entry at ({row}, {col}): {value}")]
    Derivative { what: &'static str, row: usize, col: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("backward pass failed at iteration {iteration}, step {step}: {reason}")]
    Backward { iteration: usize, step: usize, reason: String },
    #[error(
        "adversary curvature is not negative definite at step {step} (penalty {penalty}); \
         increase the disturbance penalty"
    )]
    Curvature { step: usize, penalty: f64 },
    #[error("lambda tuning failed: {0}")]
    Tuning(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
