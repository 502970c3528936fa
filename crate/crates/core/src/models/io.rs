//! Single-file JSON model format, version `gina-model-v1`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{NamedArray, ParamSet};
use super::spec::ModelSpec;
use super::train::{TrainConfig, TrainedModel};
use super::{Model, ModelError};

pub const MODEL_FORMAT_VERSION: &str = "gina-model-v1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: String,
    spec: ModelSpec,
    train: TrainConfig,
    trace: Vec<f64>,
    params: Vec<NamedArray>,
}

pub fn write_model<W: Write>(model: &TrainedModel, writer: W) -> Result<(), ModelError> {
    let file = ModelFile {
        version: MODEL_FORMAT_VERSION.to_string(),
        spec: model.spec().clone(),
        train: model.config.clone(),
        trace: model.trace.clone(),
        params: model.params().to_arrays(),
    };
    serde_json::to_writer_pretty(writer, &file).map_err(|e| ModelError::Format(e.to_string()))
}

pub fn read_model<R: Read>(reader: R) -> Result<TrainedModel, ModelError> {
    let file: ModelFile =
        serde_json::from_reader(reader).map_err(|e| ModelError::Format(e.to_string()))?;
    if file.version != MODEL_FORMAT_VERSION {
        return Err(ModelError::Format(format!(
            "unsupported model version `{}`",
            file.version
        )));
    }
    let params = ParamSet::from_arrays(&file.spec, file.params)?;
    Ok(TrainedModel {
        model: Model::from_params(file.spec, params)?,
        config: file.train,
        trace: file.trace,
    })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(f);
    write_model(model, &mut w)?;
    w.flush()
        .map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, ModelError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))?;
    read_model(BufReader::new(f))
}
