use thiserror::Error;

use crate::integrate::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (non-finite
    /// input, state outside the polytope, non-positive parameter).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid network: {0}")]
    InvalidSpec(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(
        "sampler exhausted at sample {index}: no certified draw in {attempts} attempts \
         ({rejected_structural} rejected by necessary conditions, {rejected_search} by search)"
    )]
    SamplerExhausted {
        index: usize,
        attempts: usize,
        rejected_structural: usize,
        rejected_search: usize,
    },

    /// Integration stopped early. The partial trajectory is kept for inspection.
    #[error("integration failed at t = {time}: {reason}")]
    Integration {
        time: f64,
        reason: String,
        partial: Box<Trajectory>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
