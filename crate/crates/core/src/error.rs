use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("infeasible target: {0}")]
    Infeasible(String),

    #[error("kappa-horizon-condition: kappa * T = {kappa_t} must be below pi/4")]
    KappaHorizon { kappa_t: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("log-price regression is not mean reverting (a_hat = {a_hat})")]
    NotMeanReverting { a_hat: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be finite, got {value}")))
    }
}
