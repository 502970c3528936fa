use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{glorot_uniform, Tensor};

use super::spec::{EncoderSpec, MissingInput, MissingNet, ModelSpec};
use super::ModelError;

/// One named parameter array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Ordered collection of named parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn to_arrays(&self) -> Vec<NamedArray> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(n, t)| NamedArray {
                name: n.clone(),
                shape: [t.rows(), t.cols()],
                data: t.data().to_vec(),
            })
            .collect()
    }

    /// Rebuilds a parameter set and checks it against the layout `spec` implies.
    pub fn from_arrays(spec: &ModelSpec, arrays: Vec<NamedArray>) -> Result<Self, ModelError> {
        let (_, expected) = Layout::build(spec);
        if expected.len() != arrays.len() {
            return Err(ModelError::Format(format!(
                "expected {} parameter arrays, found {}",
                expected.len(),
                arrays.len()
            )));
        }
        let mut names = Vec::with_capacity(arrays.len());
        let mut tensors = Vec::with_capacity(arrays.len());
        for (slot, arr) in expected.iter().zip(arrays) {
            if slot.name != arr.name || [slot.rows, slot.cols] != arr.shape {
                return Err(ModelError::Format(format!(
                    "parameter `{}` {:?} does not match expected `{}` [{}, {}]",
                    arr.name, arr.shape, slot.name, slot.rows, slot.cols
                )));
            }
            let t = Tensor::new(arr.shape[0], arr.shape[1], arr.data)
                .map_err(|e| ModelError::Format(format!("parameter `{}`: {e}", arr.name)))?;
            if !t.is_finite() {
                return Err(ModelError::Format(format!("parameter `{}` is not finite", arr.name)));
            }
            names.push(arr.name);
            tensors.push(t);
        }
        Ok(Self { names, tensors })
    }
}

/// Indices of a dense layer's weight (`in × out`) and bias (`1 × out`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum EncoderLayout {
    ZeroImpute(Vec<Dense>),
    PointNet {
        ids: usize,
        feature: Dense,
        head: Vec<Dense>,
    },
}

/// Where each network's parameters live inside a [`ParamSet`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Layout {
    pub encoder: EncoderLayout,
    pub decoder: Vec<Dense>,
    pub missing: Vec<Dense>,
    pub prior: Option<Dense>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Init {
    Glorot,
    Zeros,
}

#[derive(Clone, Debug)]
pub(crate) struct Slot {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

struct Builder {
    slots: Vec<Slot>,
}

impl Builder {
    fn push(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.slots.push(Slot {
            name,
            rows,
            cols,
            init,
        });
        self.slots.len() - 1
    }

    fn dense(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> Dense {
        Dense {
            w: self.push(format!("{prefix}.w"), fan_in, fan_out, Init::Glorot),
            b: self.push(format!("{prefix}.b"), 1, fan_out, Init::Zeros),
        }
    }

    fn mlp(&mut self, prefix: &str, input: usize, hidden: &[usize], output: usize) -> Vec<Dense> {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        dims.windows(2)
            .enumerate()
            .map(|(i, w)| self.dense(&format!("{prefix}.{i}"), w[0], w[1]))
            .collect()
    }
}

impl Layout {
    pub fn build(spec: &ModelSpec) -> (Layout, Vec<Slot>) {
        let d = spec.input_dim;
        let h = spec.latent_dim;
        let mut b = Builder { slots: Vec::new() };
        let encoder = match &spec.encoder {
            EncoderSpec::ZeroImpute { widths } => {
                EncoderLayout::ZeroImpute(b.mlp("encoder", 2 * d, widths, 2 * h))
            }
            EncoderSpec::PointNet {
                feature_dim,
                id_dim,
                widths,
            } => {
                let ids = b.push("encoder.ids".into(), d, *id_dim, Init::Glorot);
                let feature = b.dense("encoder.feature", 1 + id_dim, *feature_dim);
                let head = b.mlp("encoder.head", *feature_dim, widths, 2 * h);
                EncoderLayout::PointNet { ids, feature, head }
            }
        };
        let decoder = b.mlp("decoder", h, &spec.decoder_widths, d);
        let miss_in = match spec.missing_input {
            MissingInput::X => d,
            MissingInput::XZ => d + h,
        };
        let missing = match spec.missing_net {
            MissingNet::None => Vec::new(),
            MissingNet::Linear => b.mlp("missing", miss_in, &[], d),
            MissingNet::Mlp { hidden } => b.mlp("missing", miss_in, &[hidden], d),
        };
        let prior = spec
            .uses_conditional_prior()
            .then(|| b.dense("prior", spec.aux_dim, 2 * h));
        (
            Layout {
                encoder,
                decoder,
                missing,
                prior,
            },
            b.slots,
        )
    }

    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> (Layout, ParamSet) {
        let (layout, slots) = Self::build(spec);
        let mut names = Vec::with_capacity(slots.len());
        let mut tensors = Vec::with_capacity(slots.len());
        for s in slots {
            tensors.push(match s.init {
                Init::Glorot => glorot_uniform(s.rows, s.cols, rng),
                Init::Zeros => Tensor::zeros(s.rows, s.cols),
            });
            names.push(s.name);
        }
        (layout, ParamSet { names, tensors })
    }
}
