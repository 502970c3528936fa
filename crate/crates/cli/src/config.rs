use std::path::{Path, PathBuf};

use gina_core::dataio::AuxSource;
use gina_core::models::{ModelKind, ModelSpec, TrainConfig};
use gina_core::synthdata::{Dataset, DEFAULT_NOISE_VAR};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Architecture defaults to start from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `binary` when every column is 0/1, `synthetic` otherwise.
    Auto,
    Synthetic,
    Ratings,
    Binary,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Seeds for `train`, fitted in parallel; overrides `seed` when non-empty.
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub impute: ImputeConfig,
    pub evaluate: EvaluateConfig,
    pub probe: ProbeConfig,
    pub active: ActiveConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Input CSV for train, impute and active.
    pub path: Option<PathBuf>,
    /// Synthetic benchmark for generate.
    pub dataset: Dataset,
    pub n: usize,
    pub n_test: usize,
    pub noise_var: f64,
    /// Ratings are mapped from `[lo, hi]` onto `[0, 1]` before modelling and
    /// mapped back on output.
    pub rating_range: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub preset: Preset,
    pub k: Option<usize>,
    pub beta: Option<f64>,
    pub aux: Option<AuxSource>,
    pub latent_dim: Option<usize>,
    /// Trained model file for impute and active.
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeConfig {
    pub samples: usize,
    /// How many of the drawn completions to write as separate CSV files.
    pub emit_samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub pred: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// Entries observed in this file are excluded from scoring.
    pub exclude: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub truth: Option<PathBuf>,
    pub models: Vec<PathBuf>,
    /// Zero-based data columns compared.
    pub columns: Vec<usize>,
    pub bootstrap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActiveConfig {
    pub steps: usize,
    pub n_outer: usize,
    pub n_target: usize,
    /// One-row CSV with a difficulty level per column.
    pub levels: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            dataset: Dataset::A,
            n: 2000,
            n_test: 2000,
            noise_var: DEFAULT_NOISE_VAR,
            rating_range: None,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Gina,
            preset: Preset::Auto,
            k: None,
            beta: None,
            aux: None,
            latent_dim: None,
            path: None,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr: t.lr,
            batch_size: t.batch_size,
            epochs: t.epochs,
        }
    }
}

impl Default for ImputeConfig {
    fn default() -> Self {
        Self {
            samples: 20,
            emit_samples: 0,
        }
    }
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            truth: None,
            models: Vec::new(),
            columns: vec![1, 2],
            bootstrap: 20,
        }
    }
}

impl Default for ActiveConfig {
    fn default() -> Self {
        Self {
            steps: 5,
            n_outer: 10,
            n_target: 10,
            levels: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.train.lr,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed,
        }
    }

    /// Seeds to train: `seeds` when given, otherwise just `seed`.
    pub fn all_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            return vec![self.seed];
        }
        let mut out = Vec::new();
        for s in &self.seeds {
            if !out.contains(s) {
                out.push(*s);
            }
        }
        out
    }

    /// The model spec for data with `input_dim` columns and `aux_dim`
    /// metadata columns.
    pub fn model_spec(&self, input_dim: usize, aux_dim: usize, all_binary: bool) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        let preset = match m.preset {
            Preset::Auto if all_binary => Preset::Binary,
            Preset::Auto => Preset::Synthetic,
            p => p,
        };
        let aux_source = m.aux.unwrap_or(match preset {
            Preset::Ratings => AuxSource::Mask,
            _ => AuxSource::Metadata,
        });
        let aux_dim = match aux_source {
            AuxSource::Metadata => aux_dim,
            AuxSource::Mask => input_dim,
        };
        let mut spec = match preset {
            Preset::Ratings => ModelSpec::ratings(m.kind, input_dim, aux_dim),
            Preset::Binary => ModelSpec::binary(m.kind, input_dim, aux_dim),
            _ => ModelSpec::synthetic(m.kind, input_dim, aux_dim),
        };
        if m.kind == ModelKind::Gina {
            spec.aux_source = aux_source;
            spec.aux_dim = aux_dim;
        }
        if let Some(k) = m.k {
            spec.k = k;
        }
        if let Some(b) = m.beta {
            spec.beta = b;
        }
        if let Some(h) = m.latent_dim {
            spec.latent_dim = h;
        }
        spec.validate()?;
        Ok(spec)
    }
}

pub fn require<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::config(format!("missing {what}")))
}
