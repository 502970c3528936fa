use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Tensor};
use crate::distributions::{BernoulliVec, DiagGaussian};

use super::bound::{record_bound, Batch, BoundNoise};
use super::nets::Net;
use super::params::{Layout, ParamSet};
use super::spec::{Likelihood, ModelSpec};
use super::ModelError;

/// Parameters of `p(X | z)` for one latent point.
#[derive(Clone, Debug, PartialEq)]
pub enum DecodedLikelihood {
    Gaussian { mean: Vec<f64>, log_sigma: f64 },
    Bernoulli(BernoulliVec),
}

impl DecodedLikelihood {
    /// Gaussian mean or Bernoulli probability per column.
    pub fn expected(&self) -> &[f64] {
        match self {
            DecodedLikelihood::Gaussian { mean, .. } => mean,
            DecodedLikelihood::Bernoulli(b) => b.probs(),
        }
    }
}

/// Result of [`Model::impute`] on a single row.
#[derive(Clone, Debug, PartialEq)]
pub struct Imputation {
    /// `n_samples × D` completed rows.
    pub samples: Tensor,
    /// Observed entries copied through; missing entries are the mean of the
    /// decoder's expected values over the drawn latents.
    pub point: Vec<f64>,
}

/// A model architecture together with one setting of its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    layout: Layout,
    params: ParamSet,
}

impl Model {
    /// Fresh parameters: Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> Result<Self, ModelError> {
        spec.validate()?;
        let (layout, params) = Layout::init(&spec, rng);
        Ok(Self {
            spec,
            layout,
            params,
        })
    }

    pub fn from_params(spec: ModelSpec, params: ParamSet) -> Result<Self, ModelError> {
        spec.validate()?;
        let params = ParamSet::from_arrays(&spec, params.to_arrays())?;
        let (layout, _) = Layout::build(&spec);
        Ok(Self {
            spec,
            layout,
            params,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn frozen<'a>(&'a self, tape: &mut Tape) -> Net<'a> {
        Net::attach(tape, &self.spec, &self.layout, &self.params, false)
    }

    fn check_len(&self, what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
        if expected == got {
            Ok(())
        } else {
            Err(ModelError::Dim {
                what,
                expected,
                got,
            })
        }
    }

    /// Batched posterior parameters `(mean, log_var)`, each `B×H`.
    pub fn encode_batch(&self, x: &Tensor, r: &Tensor) -> Result<(Tensor, Tensor), ModelError> {
        let mut tape = Tape::new();
        let net = self.frozen(&mut tape);
        let (m, lv) = net.encode(&mut tape, x, r)?;
        Ok((tape.value(m).clone(), tape.value(lv).clone()))
    }

    /// `q(Z | x_o)`. Entries of `x` where `r = 0` are ignored.
    pub fn encode(&self, x: &[f64], r: &[f64]) -> Result<DiagGaussian, ModelError> {
        self.check_len("encode x", self.spec.input_dim, x.len())?;
        self.check_len("encode mask", self.spec.input_dim, r.len())?;
        let (m, lv) = self.encode_batch(&Tensor::row(x), &Tensor::row(r))?;
        Ok(DiagGaussian::new(m.into_data(), lv.into_data())?)
    }

    /// `q(Z | x_o)` from `(column, value)` pairs given in any order.
    pub fn encode_observed(&self, observed: &[(usize, f64)]) -> Result<DiagGaussian, ModelError> {
        let d = self.spec.input_dim;
        let mut sorted = observed.to_vec();
        sorted.sort_by_key(|&(j, _)| j);
        let (mut x, mut r) = (vec![0.0; d], vec![0.0; d]);
        for (j, v) in sorted {
            if j >= d {
                return Err(ModelError::Dim {
                    what: "observed column index",
                    expected: d,
                    got: j,
                });
            }
            x[j] = v;
            r[j] = 1.0;
        }
        self.encode(&x, &r)
    }

    /// Decoder expected values (Gaussian means or Bernoulli probabilities)
    /// for a batch of latents `B×H`.
    pub fn decode_batch(&self, z: &Tensor) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let net = self.frozen(&mut tape);
        let zv = tape.constant(z.clone());
        let out = net.decode(&mut tape, zv)?;
        Ok(tape.value(out).clone())
    }

    /// Pre-activation decoder output `f(z)`.
    pub fn decode_raw(&self, z: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_len("decode z", self.spec.latent_dim, z.len())?;
        let mut tape = Tape::new();
        let net = self.frozen(&mut tape);
        let zv = tape.constant(Tensor::row(z));
        let out = net.decode_raw(&mut tape, zv)?;
        Ok(tape.value(out).data().to_vec())
    }

    pub fn decode(&self, z: &[f64]) -> Result<DecodedLikelihood, ModelError> {
        self.check_len("decode z", self.spec.latent_dim, z.len())?;
        let out = self.decode_batch(&Tensor::row(z))?.into_data();
        Ok(match self.spec.likelihood {
            Likelihood::Gaussian { log_sigma } => DecodedLikelihood::Gaussian {
                mean: out,
                log_sigma,
            },
            Likelihood::Bernoulli => DecodedLikelihood::Bernoulli(BernoulliVec::new(out)),
        })
    }

    /// Observation probabilities of the missing-mechanism net. `z` is only
    /// read when the net takes the latent as input.
    pub fn missing_probs(&self, x: &[f64], z: &[f64]) -> Result<BernoulliVec, ModelError> {
        self.check_len("missing_probs x", self.spec.input_dim, x.len())?;
        self.check_len("missing_probs z", self.spec.latent_dim, z.len())?;
        let mut tape = Tape::new();
        let net = self.frozen(&mut tape);
        let xv = tape.constant(Tensor::row(x));
        let zv = tape.constant(Tensor::row(z));
        let pi = net.missing_probs(&mut tape, xv, zv)?;
        Ok(BernoulliVec::new(tape.value(pi).data().to_vec()))
    }

    /// Latent prior: `p(Z | u)` for GINA, `N(0, I)` otherwise.
    pub fn prior(&self, u: Option<&[f64]>) -> Result<DiagGaussian, ModelError> {
        if !self.spec.uses_conditional_prior() {
            return Ok(DiagGaussian::standard(self.spec.latent_dim));
        }
        let u = u.ok_or_else(|| ModelError::Spec("GINA prior needs auxiliary inputs".into()))?;
        let (m, lv) = self.prior_batch(&Tensor::row(u))?;
        Ok(DiagGaussian::new(m.into_data(), lv.into_data())?)
    }

    fn prior_batch(&self, u: &Tensor) -> Result<(Tensor, Tensor), ModelError> {
        let mut tape = Tape::new();
        let net = self.frozen(&mut tape);
        let (m, lv) = net.prior(&mut tape, u)?;
        Ok((tape.value(m).clone(), tape.value(lv).clone()))
    }

    /// Per-row bound values for fixed noise.
    pub fn bound_with_noise(&self, batch: &Batch, noise: &BoundNoise) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let net = self.frozen(&mut tape);
        let nodes = record_bound(&mut tape, &net, batch, noise)?;
        Ok(tape.value(nodes.per_row).data().to_vec())
    }

    /// Mean bound over the batch and its gradient with respect to every
    /// parameter, in [`ParamSet`] order.
    pub fn objective_and_gradients(
        &self,
        batch: &Batch,
        noise: &BoundNoise,
    ) -> Result<(f64, Vec<Tensor>), ModelError> {
        let mut tape = Tape::new();
        let net = Net::attach(&mut tape, &self.spec, &self.layout, &self.params, true);
        let nodes = record_bound(&mut tape, &net, batch, noise)?;
        let value = tape.value(nodes.objective).item();
        let mut grads = tape.backward(nodes.objective)?;
        let g = net.vars.iter().map(|&v| grads.take(v)).collect();
        Ok((value, g))
    }

    /// Single-row importance-weighted bound with fresh noise from `rng`.
    pub fn iw_bound<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        r: &[f64],
        u: Option<&[f64]>,
        rng: &mut R,
    ) -> Result<f64, ModelError> {
        self.check_len("iw_bound x", self.spec.input_dim, x.len())?;
        self.check_len("iw_bound mask", self.spec.input_dim, r.len())?;
        let batch = Batch {
            x: Tensor::row(x),
            r: Tensor::row(r),
            u: u.map(Tensor::row),
        };
        let noise = BoundNoise::draw(1, &self.spec, rng);
        Ok(self.bound_with_noise(&batch, &noise)?[0])
    }

    fn sample_likelihood<R: Rng + ?Sized>(&self, expected: &Tensor, rng: &mut R) -> Tensor {
        match self.spec.likelihood {
            Likelihood::Gaussian { log_sigma } => {
                let sd = log_sigma.exp();
                expected.map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
            }
            Likelihood::Bernoulli => expected.map(|p| if rng.gen::<f64>() < p { 1.0 } else { 0.0 }),
        }
    }

    fn sample_latents<R: Rng + ?Sized>(mean: &Tensor, log_var: &Tensor, rng: &mut R) -> Tensor {
        mean.zip_map(log_var, |m, lv| m + (0.5 * lv).exp() * rng.sample::<f64, _>(StandardNormal))
    }

    /// One draw of `x ~ p(X | z)` per row of `z` (`n×H` to `n×D`).
    pub fn sample_data<R: Rng + ?Sized>(&self, z: &Tensor, rng: &mut R) -> Result<Tensor, ModelError> {
        let expected = self.decode_batch(z)?;
        Ok(self.sample_likelihood(&expected, rng))
    }

    /// Draws `z ~ q(Z | x_o)`, then `x_u ~ p(X_u | z)`, `n_samples` times.
    pub fn impute<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        r: &[f64],
        n_samples: usize,
        rng: &mut R,
    ) -> Result<Imputation, ModelError> {
        if n_samples < 1 {
            return Err(ModelError::NoSamples);
        }
        let q = self.encode(x, r)?;
        let h = self.spec.latent_dim;
        let mean = Tensor::from_fn(n_samples, h, |_, j| q.mean()[j]);
        let lv = Tensor::from_fn(n_samples, h, |_, j| q.log_var()[j]);
        let z = Self::sample_latents(&mean, &lv, rng);
        let expected = self.decode_batch(&z)?;
        let drawn = self.sample_likelihood(&expected, rng);
        let d = self.spec.input_dim;
        let samples = Tensor::from_fn(n_samples, d, |s, j| {
            if r[j] == 1.0 {
                x[j]
            } else {
                drawn.get(s, j)
            }
        });
        let point = (0..d)
            .map(|j| {
                if r[j] == 1.0 {
                    x[j]
                } else {
                    expected.column_values(j).iter().sum::<f64>() / n_samples as f64
                }
            })
            .collect();
        Ok(Imputation { samples, point })
    }

    /// Imputes every row. Returns the point estimates and `n_samples`
    /// completed copies of the data (sample `s` of every row in `samples[s]`).
    pub fn impute_matrix<R: Rng + ?Sized>(
        &self,
        x: &Tensor,
        r: &Tensor,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<(Tensor, Vec<Tensor>), ModelError> {
        if n_samples < 1 {
            return Err(ModelError::NoSamples);
        }
        let (n, d) = x.shape();
        let mut point = Tensor::zeros(n, d);
        let mut samples = vec![Tensor::zeros(n, d); n_samples];
        for i in 0..n {
            let imp = self.impute(x.row_slice(i), r.row_slice(i), n_samples, rng)?;
            point.row_slice_mut(i).copy_from_slice(&imp.point);
            for (s, t) in samples.iter_mut().enumerate() {
                t.row_slice_mut(i).copy_from_slice(imp.samples.row_slice(s));
            }
        }
        Ok((point, samples))
    }

    /// `n` draws of `z ~ prior(u)`, `x ~ p(X | z)`.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        u: Option<&[f64]>,
        n: usize,
        rng: &mut R,
    ) -> Result<Tensor, ModelError> {
        let p = self.prior(u)?;
        let h = self.spec.latent_dim;
        let mean = Tensor::from_fn(n, h, |_, j| p.mean()[j]);
        let lv = Tensor::from_fn(n, h, |_, j| p.log_var()[j]);
        let z = Self::sample_latents(&mean, &lv, rng);
        let expected = self.decode_batch(&z)?;
        Ok(self.sample_likelihood(&expected, rng))
    }

    /// One generated row per auxiliary row (`aux` is ignored by models
    /// without a conditional prior, which then draw `aux.rows()` samples).
    pub fn generate_for_aux<R: Rng + ?Sized>(&self, aux: &Tensor, rng: &mut R) -> Result<Tensor, ModelError> {
        let n = aux.rows();
        let (mean, lv) = if self.spec.uses_conditional_prior() {
            self.prior_batch(aux)?
        } else {
            let h = self.spec.latent_dim;
            (Tensor::zeros(n, h), Tensor::zeros(n, h))
        };
        let z = Self::sample_latents(&mean, &lv, rng);
        let expected = self.decode_batch(&z)?;
        Ok(self.sample_likelihood(&expected, rng))
    }
}
