use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Argument outside the domain of a density or divergence.
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameters that violate a type invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Sample that cannot support a spliced fit.
    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("threshold prior has no positive mass (all candidate order statistics tied)")]
    DegeneratePrior,

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("no samples to summarize")]
    EmptySamples,

    #[error("could not find a valid starting state: {0}")]
    Initialization(String),

    #[error("quadrature did not converge: estimated error {0:e}")]
    Quadrature(f64),
}
