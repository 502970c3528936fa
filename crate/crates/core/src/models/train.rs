use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::AdamState;
use crate::dataio::{assemble_aux, MaskedMatrix};

use super::bound::{Batch, BoundNoise};
use super::model::Model;
use super::spec::ModelSpec;
use super::ModelError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 100,
            epochs: 2000,
            seed: 0,
        }
    }
}

/// A fitted model plus the record of how it was fitted.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: Model,
    pub config: TrainConfig,
    /// Epoch-mean bound, one entry per epoch.
    pub trace: Vec<f64>,
}

impl std::ops::Deref for TrainedModel {
    type Target = Model;

    fn deref(&self) -> &Model {
        &self.model
    }
}

/// Rows `idx` of `data` as a bound batch, with `U` attached when needed.
pub fn make_batch(data: &MaskedMatrix, aux: Option<&crate::autodiff::Tensor>, idx: &[usize]) -> Batch {
    Batch {
        x: data.values().select_rows(idx),
        r: data.mask().select_rows(idx),
        u: aux.map(|a| a.select_rows(idx)),
    }
}

/// Auxiliary matrix the model's prior consumes, if any.
pub fn model_aux(
    data: &MaskedMatrix,
    spec: &ModelSpec,
) -> Result<Option<crate::autodiff::Tensor>, ModelError> {
    if !spec.uses_conditional_prior() {
        return Ok(None);
    }
    let u = assemble_aux(data, spec.aux_source)?;
    if u.cols() != spec.aux_dim {
        return Err(ModelError::Dim {
            what: "auxiliary columns",
            expected: spec.aux_dim,
            got: u.cols(),
        });
    }
    Ok(Some(u))
}

pub fn train(data: &MaskedMatrix, spec: &ModelSpec, config: &TrainConfig) -> Result<TrainedModel, ModelError> {
    train_with_progress(data, spec, config, |_, _| {})
}

/// Maximizes the mean importance-weighted bound with Adam over shuffled
/// minibatches. `progress(epoch, epoch_mean_bound)` runs after each epoch.
pub fn train_with_progress(
    data: &MaskedMatrix,
    spec: &ModelSpec,
    config: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainedModel, ModelError> {
    spec.validate()?;
    if data.n_cols() != spec.input_dim {
        return Err(ModelError::Dim {
            what: "data columns",
            expected: spec.input_dim,
            got: data.n_cols(),
        });
    }
    if data.n_rows() == 0 || config.batch_size == 0 {
        return Err(ModelError::Spec("training needs rows and a positive batch size".into()));
    }
    let aux = model_aux(data, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::init(spec.clone(), &mut rng)?;
    let mut adam = AdamState::new(model.params().tensors(), config.lr);
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = make_batch(data, aux.as_ref(), idx);
            let noise = BoundNoise::draw(idx.len(), spec, &mut rng);
            let (value, grads) = model
                .objective_and_gradients(&batch, &noise)
                .map_err(|e| e.at(epoch, b))?;
            let descent: Vec<_> = grads.into_iter().map(|g| g.map(|v| -v)).collect();
            adam.step(model.params_mut().tensors_mut(), &descent)?;
            total += value * idx.len() as f64;
        }
        let mean = total / data.n_rows() as f64;
        trace.push(mean);
        progress(epoch, mean);
    }
    if !model.params().is_finite() {
        return Err(ModelError::NonFinite {
            term: "parameters",
            location: format!("after epoch {}", config.epochs),
        });
    }
    Ok(TrainedModel {
        model,
        config: config.clone(),
        trace,
    })
}
