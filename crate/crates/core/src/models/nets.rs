//! Network forward passes recorded on a tape.

use crate::autodiff::{Tape, Tensor, Var};
use crate::distributions::{LOG_VAR_MAX, LOG_VAR_MIN};

use super::params::{Dense, EncoderLayout, Layout, ParamSet};
use super::spec::{Activation, Likelihood, ModelSpec};
use super::ModelError;

/// A model's parameters attached to a tape.
pub(crate) struct Net<'a> {
    pub spec: &'a ModelSpec,
    layout: &'a Layout,
    pub vars: Vec<Var>,
}

fn activate(tape: &mut Tape, x: Var, act: Activation) -> Var {
    match act {
        Activation::Tanh => tape.tanh(x),
        Activation::Relu => tape.relu(x),
    }
}

/// `x ⊙ r` with unobserved entries forced to exactly zero.
pub(crate) fn masked_values(x: &Tensor, r: &Tensor) -> Tensor {
    x.zip_map(r, |v, m| if m == 1.0 { v } else { 0.0 })
}

impl<'a> Net<'a> {
    /// Registers every parameter as a leaf. With `trainable = false` the
    /// leaves are constants and no gradients are tracked.
    pub fn attach(
        tape: &mut Tape,
        spec: &'a ModelSpec,
        layout: &'a Layout,
        params: &ParamSet,
        trainable: bool,
    ) -> Self {
        let vars = params
            .tensors()
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        Self { spec, layout, vars }
    }

    fn mlp(
        &self,
        tape: &mut Tape,
        mut h: Var,
        layers: &[Dense],
        act: Activation,
    ) -> Result<Var, ModelError> {
        for (i, layer) in layers.iter().enumerate() {
            let lin = tape.matmul(h, self.vars[layer.w])?;
            h = tape.add(lin, self.vars[layer.b])?;
            if i + 1 < layers.len() {
                h = activate(tape, h, act);
            }
        }
        Ok(h)
    }

    fn split_gaussian(&self, tape: &mut Tape, out: Var) -> Result<(Var, Var), ModelError> {
        let h = self.spec.latent_dim;
        let mean = tape.slice_cols(out, 0, h)?;
        let raw = tape.slice_cols(out, h, 2 * h)?;
        let log_var = tape.clamp(raw, LOG_VAR_MIN, LOG_VAR_MAX);
        Ok((mean, log_var))
    }

    /// Posterior `q(Z | x_o)` for a batch: returns `(mean, log_var)`, each `B×H`.
    pub fn encode(&self, tape: &mut Tape, x: &Tensor, r: &Tensor) -> Result<(Var, Var), ModelError> {
        let d = self.spec.input_dim;
        if x.cols() != d || r.shape() != x.shape() {
            return Err(ModelError::Dim {
                what: "encoder input",
                expected: d,
                got: x.cols(),
            });
        }
        let xo = masked_values(x, r);
        let out = match &self.layout.encoder {
            EncoderLayout::ZeroImpute(layers) => {
                let joined = Tensor::from_fn(x.rows(), 2 * d, |i, j| {
                    if j < d {
                        xo.get(i, j)
                    } else {
                        r.get(i, j - d)
                    }
                });
                let inp = tape.constant(joined);
                self.mlp(tape, inp, layers, Activation::Tanh)?
            }
            EncoderLayout::PointNet { ids, feature, head } => {
                let agg = self.point_net_aggregate(tape, &xo, r, *ids, *feature)?;
                self.mlp(tape, agg, head, Activation::Tanh)?
            }
        };
        self.split_gaussian(tape, out)
    }

    /// `Σ_d r_d · tanh(x_d · w_x + e_d · W_e + b)`, summed in ascending `d`.
    fn point_net_aggregate(
        &self,
        tape: &mut Tape,
        xo: &Tensor,
        r: &Tensor,
        ids: usize,
        feature: Dense,
    ) -> Result<Var, ModelError> {
        let rows = xo.rows();
        let id_dim = tape.shape(self.vars[ids]).1;
        let feat_dim = tape.shape(self.vars[feature.b]).1;
        let w_x = tape.slice_rows(self.vars[feature.w], 0, 1)?;
        let w_e = tape.slice_rows(self.vars[feature.w], 1, 1 + id_dim)?;
        let id_proj = tape.matmul(self.vars[ids], w_e)?;
        let offsets = tape.add(id_proj, self.vars[feature.b])?;
        let mut agg: Option<Var> = None;
        for d in 0..self.spec.input_dim {
            let rcol = r.column_values(d);
            if rcol.iter().all(|&v| v == 0.0) {
                continue;
            }
            let xcol = tape.constant(Tensor::column(&xo.column_values(d)));
            let rvar = tape.constant(Tensor::column(&rcol));
            let lin = tape.matmul(xcol, w_x)?;
            let off = tape.slice_rows(offsets, d, d + 1)?;
            let pre = tape.add(lin, off)?;
            let act = tape.tanh(pre);
            let contrib = tape.mul(act, rvar)?;
            agg = Some(match agg {
                Some(a) => tape.add(a, contrib)?,
                None => contrib,
            });
        }
        Ok(agg.unwrap_or_else(|| tape.constant(Tensor::zeros(rows, feat_dim))))
    }

    /// Decoder pre-activation output `f(z)`, `B×D`.
    pub fn decode_raw(&self, tape: &mut Tape, z: Var) -> Result<Var, ModelError> {
        let h = tape.shape(z).1;
        if h != self.spec.latent_dim {
            return Err(ModelError::Dim {
                what: "latent",
                expected: self.spec.latent_dim,
                got: h,
            });
        }
        self.mlp(tape, z, &self.layout.decoder, self.spec.decoder_activation)
    }

    /// Gaussian means, or Bernoulli probabilities, of `p(X | z)`.
    pub fn decode(&self, tape: &mut Tape, z: Var) -> Result<Var, ModelError> {
        let raw = self.decode_raw(tape, z)?;
        Ok(match self.spec.likelihood {
            Likelihood::Gaussian { .. } => raw,
            Likelihood::Bernoulli => tape.sigmoid(raw),
        })
    }

    /// Observation probabilities `π(x[, z])`, `B×D`.
    pub fn missing_probs(&self, tape: &mut Tape, x: Var, z: Var) -> Result<Var, ModelError> {
        if self.layout.missing.is_empty() {
            return Err(ModelError::NoMissingNet);
        }
        let input = match self.spec.missing_input {
            super::spec::MissingInput::X => x,
            super::spec::MissingInput::XZ => tape.concat_cols(&[x, z])?,
        };
        let logits = self.mlp(tape, input, &self.layout.missing, Activation::Tanh)?;
        Ok(tape.sigmoid(logits))
    }

    /// Conditional prior `p(Z | u)` for a batch of auxiliary rows.
    pub fn prior(&self, tape: &mut Tape, u: &Tensor) -> Result<(Var, Var), ModelError> {
        let layer = self.layout.prior.ok_or_else(|| {
            ModelError::Spec(format!("{} has no conditional prior", self.spec.kind.name()))
        })?;
        if u.cols() != self.spec.aux_dim {
            return Err(ModelError::Dim {
                what: "auxiliary input",
                expected: self.spec.aux_dim,
                got: u.cols(),
            });
        }
        let uv = tape.constant(u.clone());
        let out = self.mlp(tape, uv, &[layer], Activation::Tanh)?;
        self.split_gaussian(tape, out)
    }
}
