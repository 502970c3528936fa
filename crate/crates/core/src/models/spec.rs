use serde::{Deserialize, Serialize};

use crate::dataio::AuxSource;

use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Identifiable VAE with conditional prior `p(Z|U)` and missing model `p(R|X,Z)`.
    Gina,
    /// Partial VAE: ignores the missing mechanism (MAR).
    Pvae,
    /// Standard-normal prior with missing model `p(R|X)`.
    NotMiwae,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gina => "gina",
            ModelKind::Pvae => "pvae",
            ModelKind::NotMiwae => "not_miwae",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gina" => Ok(ModelKind::Gina),
            "pvae" => Ok(ModelKind::Pvae),
            "not_miwae" | "notmiwae" => Ok(ModelKind::NotMiwae),
            other => Err(ModelError::Spec(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum EncoderSpec {
    /// MLP on `[x ⊙ r ; r]` with tanh hidden layers.
    ZeroImpute { widths: Vec<usize> },
    /// Set encoder: per observed feature `h(x_d, e_d)` with a learned ID
    /// vector `e_d`, summed over observed features, then an MLP head.
    PointNet {
        feature_dim: usize,
        id_dim: usize,
        #[serde(default)]
        widths: Vec<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Likelihood {
    /// Gaussian with learned mean and fixed standard deviation `exp(log_sigma)`.
    Gaussian { log_sigma: f64 },
    Bernoulli,
}

impl Likelihood {
    pub fn gaussian_with_variance(var: f64) -> Self {
        Likelihood::Gaussian {
            log_sigma: 0.5 * var.ln(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum MissingNet {
    None,
    Linear,
    Mlp { hidden: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingInput {
    X,
    XZ,
}

/// Full architecture and objective description of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Number of data columns `D`.
    pub input_dim: usize,
    /// Number of auxiliary inputs `A` to the conditional prior (GINA only).
    pub aux_dim: usize,
    pub latent_dim: usize,
    /// Hidden widths of the decoder; the output layer has `input_dim` units.
    pub decoder_widths: Vec<usize>,
    pub decoder_activation: Activation,
    pub encoder: EncoderSpec,
    pub likelihood: Likelihood,
    pub missing_net: MissingNet,
    pub missing_input: MissingInput,
    /// Importance samples per row.
    pub k: usize,
    /// Weight on the missing-mechanism log-likelihood.
    pub beta: f64,
    pub aux_source: AuxSource,
}

impl ModelSpec {
    fn with_kind(mut self, kind: ModelKind, missing: MissingNet) -> Self {
        self.kind = kind;
        match kind {
            ModelKind::Gina => {
                self.missing_net = missing;
                self.missing_input = MissingInput::XZ;
            }
            ModelKind::NotMiwae => {
                self.missing_net = missing;
                self.missing_input = MissingInput::X;
                self.aux_dim = 0;
            }
            ModelKind::Pvae => {
                self.missing_net = MissingNet::None;
                self.missing_input = MissingInput::X;
                self.aux_dim = 0;
            }
        }
        self
    }

    /// Defaults for the 3-D synthetic benchmarks: `H = 5`, decoder `5-10-D`,
    /// zero-impute encoder `2D-10-10-5`, `log σ = −2`, one-hidden-layer
    /// missing net with 10 units, `K = 5`, tanh everywhere.
    pub fn synthetic(kind: ModelKind, input_dim: usize, aux_dim: usize) -> Self {
        Self {
            kind,
            input_dim,
            aux_dim,
            latent_dim: 5,
            decoder_widths: vec![10],
            decoder_activation: Activation::Tanh,
            encoder: EncoderSpec::ZeroImpute {
                widths: vec![10, 10],
            },
            likelihood: Likelihood::Gaussian { log_sigma: -2.0 },
            missing_net: MissingNet::None,
            missing_input: MissingInput::X,
            k: 5,
            beta: 1.0,
            aux_source: AuxSource::Metadata,
        }
        .with_kind(kind, MissingNet::Mlp { hidden: 10 })
    }

    /// Defaults for ratings in `[0, 1]`: `H = 20`, decoder `20-10-D`, set
    /// encoder with 20-d features and 20-d IDs, Gaussian variance 0.02,
    /// linear missing net.
    pub fn ratings(kind: ModelKind, input_dim: usize, aux_dim: usize) -> Self {
        Self {
            kind,
            input_dim,
            aux_dim,
            latent_dim: 20,
            decoder_widths: vec![10],
            decoder_activation: Activation::Tanh,
            encoder: EncoderSpec::PointNet {
                feature_dim: 20,
                id_dim: 20,
                widths: vec![],
            },
            likelihood: Likelihood::gaussian_with_variance(0.02),
            missing_net: MissingNet::None,
            missing_input: MissingInput::X,
            k: 5,
            beta: 1.0,
            aux_source: AuxSource::Mask,
        }
        .with_kind(kind, MissingNet::Linear)
    }

    /// Defaults for binary response matrices: `H = 50`, decoder `50-20-50-D`
    /// with ReLU, set encoder with 50-d features and 10-d IDs, Bernoulli
    /// likelihood, `β = 0.5`.
    pub fn binary(kind: ModelKind, input_dim: usize, aux_dim: usize) -> Self {
        Self {
            kind,
            input_dim,
            aux_dim,
            latent_dim: 50,
            decoder_widths: vec![20, 50],
            decoder_activation: Activation::Relu,
            encoder: EncoderSpec::PointNet {
                feature_dim: 50,
                id_dim: 10,
                widths: vec![],
            },
            likelihood: Likelihood::Bernoulli,
            missing_net: MissingNet::None,
            missing_input: MissingInput::X,
            k: 5,
            beta: 0.5,
            aux_source: AuxSource::Metadata,
        }
        .with_kind(kind, MissingNet::Linear)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: &str| Err(ModelError::Spec(msg.to_string()));
        if self.input_dim == 0 || self.latent_dim == 0 {
            return fail("input_dim and latent_dim must be positive");
        }
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return fail("beta must lie in (0, 1]");
        }
        if self.decoder_widths.contains(&0) {
            return fail("decoder widths must be positive");
        }
        match &self.encoder {
            EncoderSpec::ZeroImpute { widths } if widths.contains(&0) => {
                return fail("encoder widths must be positive")
            }
            EncoderSpec::PointNet {
                feature_dim,
                id_dim,
                widths,
            } if *feature_dim == 0 || *id_dim == 0 || widths.contains(&0) => {
                return fail("point-net dimensions must be positive")
            }
            _ => {}
        }
        if let Likelihood::Gaussian { log_sigma } = self.likelihood {
            if !log_sigma.is_finite() {
                return fail("log_sigma must be finite");
            }
        }
        if let MissingNet::Mlp { hidden: 0 } = self.missing_net {
            return fail("missing-net hidden width must be positive");
        }
        match self.kind {
            ModelKind::Pvae if self.missing_net != MissingNet::None => {
                fail("PVAE has no missing net")
            }
            ModelKind::NotMiwae if self.missing_input != MissingInput::X => {
                fail("Not-MIWAE missing net sees X only")
            }
            ModelKind::NotMiwae | ModelKind::Gina if self.missing_net == MissingNet::None => {
                fail("MNAR models need a missing net")
            }
            ModelKind::Gina if self.missing_input != MissingInput::XZ => {
                fail("GINA missing net sees X and Z")
            }
            ModelKind::Gina if self.aux_dim == 0 => fail("GINA needs at least one auxiliary input"),
            _ => Ok(()),
        }
    }

    pub fn uses_conditional_prior(&self) -> bool {
        self.kind == ModelKind::Gina
    }
}
