//! The importance-weighted bound on `log p(x_o, r)`.
//!
//! For each row, `K` latents are drawn from the encoder and the missing
//! entries are filled from the decoder. With
//! `ln w_k = β·ln p(r | x_o, x_u^k, z^k) + ln p(x_o | z^k) + ln p(z^k | u) − ln q(z^k | x_o)`
//! the bound is `logsumexp_k(ln w_k) − ln K`. PVAE drops the missing term; Not-MIWAE and
//! PVAE use a standard-normal prior.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Tensor, Var};
use crate::distributions::{gaussian_logpdf_rows, rsample, PROB_EPS, HALF_LN_2PI};

use super::nets::{masked_values, Net};
use super::spec::{Likelihood, ModelSpec};
use super::ModelError;

/// A batch of rows: values (`B×D`), mask (`B×D`) and optional aux (`B×A`).
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub r: Tensor,
    pub u: Option<Tensor>,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.x.rows()
    }
}

/// Standard-normal draws consumed by one evaluation of the bound. Fixing
/// them makes the bound a deterministic function of the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundNoise {
    /// `(B·K) × H`, reparameterizes `z ~ q(Z | x_o)`.
    pub latent: Tensor,
    /// `(B·K) × D`, reparameterizes the imputed `x_u ~ p(X_u | z)`.
    pub data: Tensor,
}

impl BoundNoise {
    pub fn draw<R: Rng + ?Sized>(rows: usize, spec: &ModelSpec, rng: &mut R) -> Self {
        let n = rows * spec.k;
        let mut normal = |c: usize| Tensor::from_fn(n, c, |_, _| rng.sample(StandardNormal));
        let latent = normal(spec.latent_dim);
        let data = match spec.likelihood {
            Likelihood::Gaussian { .. } => normal(spec.input_dim),
            Likelihood::Bernoulli => Tensor::zeros(n, spec.input_dim),
        };
        Self { latent, data }
    }
}

pub(crate) struct BoundNodes {
    /// `B×1` per-row bound.
    pub per_row: Var,
    /// Mean of `per_row`.
    pub objective: Var,
}

fn check_finite(tape: &Tape, v: Var, term: &'static str) -> Result<(), ModelError> {
    if tape.value(v).is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFinite {
            term,
            location: String::new(),
        })
    }
}

fn repeat_const(t: &Tensor, k: usize) -> Tensor {
    let idx: Vec<usize> = (0..t.rows()).flat_map(|i| std::iter::repeat_n(i, k)).collect();
    t.select_rows(&idx)
}

pub(crate) fn record_bound(
    tape: &mut Tape,
    net: &Net<'_>,
    batch: &Batch,
    noise: &BoundNoise,
) -> Result<BoundNodes, ModelError> {
    let spec = net.spec;
    let (b, k, d, h) = (batch.rows(), spec.k, spec.input_dim, spec.latent_dim);
    if noise.latent.shape() != (b * k, h) || noise.data.shape() != (b * k, d) {
        return Err(ModelError::Dim {
            what: "bound noise rows",
            expected: b * k,
            got: noise.latent.rows(),
        });
    }

    let (mu, lv) = net.encode(tape, &batch.x, &batch.r)?;
    let mu_k = tape.repeat_rows(mu, k);
    let lv_k = tape.repeat_rows(lv, k);
    let z = rsample(tape, mu_k, lv_k, noise.latent.clone())?;
    let log_q = gaussian_logpdf_rows(tape, z, mu_k, lv_k)?;
    check_finite(tape, log_q, "log q(z|x_o)")?;

    let xo = repeat_const(&masked_values(&batch.x, &batch.r), k);
    let r = repeat_const(&batch.r, k);
    let not_r = r.map(|v| 1.0 - v);
    let out = net.decode(tape, z)?;

    let (log_px, fill) = match spec.likelihood {
        Likelihood::Gaussian { log_sigma } => {
            let var = (2.0 * log_sigma).exp();
            let xv = tape.constant(xo.clone());
            let diff = tape.sub(xv, out)?;
            let sq = tape.square(diff);
            let scaled = tape.scale(sq, -0.5 / var);
            let lp = tape.shift(scaled, -HALF_LN_2PI - log_sigma);
            let rv = tape.constant(r.clone());
            let masked = tape.mul(lp, rv)?;
            let log_px = tape.sum_cols(masked);
            let noise_x = tape.constant(noise.data.map(|e| e * log_sigma.exp()));
            let sample = tape.add(out, noise_x)?;
            (log_px, sample)
        }
        Likelihood::Bernoulli => {
            let p = tape.clamp(out, PROB_EPS, 1.0 - PROB_EPS);
            let lp = tape.log(p)?;
            let neg = tape.scale(p, -1.0);
            let q = tape.shift(neg, 1.0);
            let lq = tape.log(q)?;
            let pos_w = tape.constant(xo.zip_map(&r, |x, m| x * m));
            let neg_w = tape.constant(xo.zip_map(&r, |x, m| (1.0 - x) * m));
            let a = tape.mul(lp, pos_w)?;
            let bq = tape.mul(lq, neg_w)?;
            let s = tape.add(a, bq)?;
            (tape.sum_cols(s), out)
        }
    };
    check_finite(tape, log_px, "log p(x_o|z)")?;

    let log_pz = if spec.uses_conditional_prior() {
        let u = batch
            .u
            .as_ref()
            .ok_or_else(|| ModelError::Spec("GINA bound needs auxiliary inputs".into()))?;
        let (pm, plv) = net.prior(tape, u)?;
        let pm_k = tape.repeat_rows(pm, k);
        let plv_k = tape.repeat_rows(plv, k);
        gaussian_logpdf_rows(tape, z, pm_k, plv_k)?
    } else {
        let sq = tape.square(z);
        let half = tape.scale(sq, -0.5);
        let lp = tape.shift(half, -HALF_LN_2PI);
        tape.sum_cols(lp)
    };
    check_finite(tape, log_pz, "log p(z|u)")?;

    let joint = tape.add(log_px, log_pz)?;
    let mut log_w = tape.sub(joint, log_q)?;

    if spec.missing_net != super::MissingNet::None {
        let xo_v = tape.constant(xo);
        let not_r_v = tape.constant(not_r);
        let imputed = tape.mul(fill, not_r_v)?;
        let x_fill = tape.add(xo_v, imputed)?;
        let pi = net.missing_probs(tape, x_fill, z)?;
        let log_pr = crate::distributions::bernoulli_logpmf_rows(tape, &r, pi)?;
        check_finite(tape, log_pr, "log p(r|x,z)")?;
        let weighted = tape.scale(log_pr, spec.beta);
        log_w = tape.add(log_w, weighted)?;
    }

    let grid = tape.reshape(log_w, b, k)?;
    let lse = tape.logsumexp_rows(grid);
    let per_row = tape.shift(lse, -(k as f64).ln());
    check_finite(tape, per_row, "importance-weighted bound")?;
    let objective = tape.mean(per_row);
    Ok(BoundNodes { per_row, objective })
}
