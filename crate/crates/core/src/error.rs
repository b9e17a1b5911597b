use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation requested inside the excluded band next to `x = 1`.
    #[error("singularity: x = {x} is within {eps} of the pole at 1")]
    Singularity { x: f64, eps: f64 },

    /// A signal or window too short to estimate anything from.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An iterative method failed to meet its tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Simulation state stopped being finite.
    #[error("numerical blow-up at t = {t}: {what}")]
    BlowUp { t: f64, what: String },

    /// Invalid model or solver configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Bisection bracket does not straddle the transition.
    #[error("bracket error: {0}")]
    Bracket(String),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::Config(_) | Error::Degenerate(_) | Error::Bracket(_))
    }
}
