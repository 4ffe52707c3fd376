//! Bayesian optimization over data mixing ratios with influence-weighted
//! sampling of the mixtures evaluated at each proposed ratio.

pub mod acquire;
pub mod cli;
pub mod engine;
pub mod error;
pub mod estimator;
pub mod evaluate;
pub mod gp;
pub mod ifweights;
mod linalg;
pub mod regret;
pub mod seed;
pub mod stats;
pub mod types;
pub mod validation;

pub use error::{Error, Result};
pub use evaluate::{EvalError, EvaluatorHandle};
pub use types::{
    DataPoint, DomainDataset, EstimatorKind, MixingRatio, MixtureManifest, Observation, RunConfig,
};
