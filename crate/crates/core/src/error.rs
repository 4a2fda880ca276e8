use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A modelling assumption is violated. The message names the assumption.
    #[error("{0}")]
    Validation(String),

    #[error("value {value} outside the open range ({lower}, {upper})")]
    Range { value: f64, lower: f64, upper: f64 },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("integration diverged at t = {t}: {what}")]
    Diverged { t: f64, what: String },

    #[error("problem too large: {0}")]
    TooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what}: expected length {want}, got {got}")))
    }
}
