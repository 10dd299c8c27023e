use thiserror::Error;

use crate::model::Observation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: expected {range}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        range: &'static str,
    },

    #[error("observation {observation:?} is impossible under the current belief (probability {probability:e})")]
    ImpossibleObservation {
        observation: Observation,
        probability: f64,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("policy `{policy}` cannot be used in the {environment} environment")]
    WrongEnvironment {
        policy: String,
        environment: &'static str,
    },

    #[error("limit exceeded: {limit} = {value} exceeds the maximum of {max}")]
    LimitExceeded {
        limit: &'static str,
        value: u64,
        max: u64,
    },

    #[error("unknown policy `{0}` (expected optimal | even | approx | heuristic | myopic | static:<p> | static:auto)")]
    UnknownPolicy(String),

    #[error("thread pool: {0}")]
    ThreadPool(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_probability(name: &'static str, p: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::InvalidParameter {
            name,
            value: p.to_string(),
            range: "[0, 1]",
        })
    }
}
