//! GINA, PVAE and Not-MIWAE: encoders, decoders, missing-mechanism nets,
//! the importance-weighted objective, training, imputation and generation.

mod bound;
mod io;
mod model;
mod nets;
mod params;
mod spec;
mod train;

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::dataio::DataError;
use crate::distributions::DistError;

pub use bound::{Batch, BoundNoise};
pub use io::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION};
pub use model::{DecodedLikelihood, Imputation, Model};
pub use params::{NamedArray, ParamSet};
pub use spec::{Activation, EncoderSpec, Likelihood, MissingInput, MissingNet, ModelKind, ModelSpec};
pub use train::{make_batch, model_aux, train, train_with_progress, TrainConfig, TrainedModel};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("{what}: expected {expected}, got {got}")]
    Dim {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("model has no missing-mechanism net")]
    NoMissingNet,
    #[error("non-finite value in {term}{location}")]
    NonFinite { term: &'static str, location: String },
    #[error("at least one imputation sample is required")]
    NoSamples,
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl ModelError {
    pub(crate) fn at(self, epoch: usize, batch: usize) -> Self {
        match self {
            ModelError::NonFinite { term, .. } => ModelError::NonFinite {
                term,
                location: format!(" (epoch {epoch}, batch {batch})"),
            },
            other => other,
        }
    }
}
