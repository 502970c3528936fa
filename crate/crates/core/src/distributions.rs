//! Diagonal Gaussians, Bernoulli vectors and the conditional latent prior.
//!
//! Value-level functions work on plain slices; the `*_rows` helpers record
//! the same densities on a [`Tape`] for a batch of rows at once.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;
pub const PROB_EPS: f64 = 1e-7;

pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("mask entries must be 0 or 1, got {0}")]
    NonBinary(f64),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), DistError> {
    if expected == got {
        Ok(())
    } else {
        Err(DistError::DimMismatch {
            what,
            expected,
            got,
        })
    }
}

/// Gaussian with diagonal covariance, parameterized by log-variance.
///
/// Log-variances are clamped into `[-10, 10]` on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    log_var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self, DistError> {
        check_dim("DiagGaussian log_var", mean.len(), log_var.len())?;
        let log_var = log_var
            .into_iter()
            .map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX))
            .collect();
        Ok(Self { mean, log_var })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_var(&self) -> &[f64] {
        &self.log_var
    }

    pub fn var(&self) -> Vec<f64> {
        self.log_var.iter().map(|v| v.exp()).collect()
    }

    /// Draws `μ + σ·η` with `η ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let eta: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.sample_with(&eta)
    }

    /// Deterministic reparameterized sample for a given standard-normal `eta`.
    pub fn sample_with(&self, eta: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_var)
            .zip(eta)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect()
    }
}

/// Independent Bernoulli probabilities, clamped into `[ε, 1 − ε]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliVec {
    probs: Vec<f64>,
}

impl BernoulliVec {
    pub fn new(probs: Vec<f64>) -> Self {
        Self {
            probs: probs
                .into_iter()
                .map(|p| p.clamp(PROB_EPS, 1.0 - PROB_EPS))
                .collect(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }
}

pub fn gaussian_logpdf(x: &[f64], g: &DiagGaussian) -> Result<f64, DistError> {
    check_dim("gaussian_logpdf", g.dim(), x.len())?;
    Ok(x.iter()
        .zip(g.mean())
        .zip(g.log_var())
        .map(|((x, m), lv)| -HALF_LN_2PI - 0.5 * lv - (x - m).powi(2) / (2.0 * lv.exp()))
        .sum())
}

pub fn bernoulli_logpmf(r: &[f64], b: &BernoulliVec) -> Result<f64, DistError> {
    check_dim("bernoulli_logpmf", b.dim(), r.len())?;
    let mut total = 0.0;
    for (&rd, &p) in r.iter().zip(b.probs()) {
        if rd == 1.0 {
            total += p.ln();
        } else if rd == 0.0 {
            total += (1.0 - p).ln();
        } else {
            return Err(DistError::NonBinary(rd));
        }
    }
    Ok(total)
}

/// Closed-form `KL(q || p)` between diagonal Gaussians.
pub fn kl_diag_gaussians(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64, DistError> {
    check_dim("kl_diag_gaussians", q.dim(), p.dim())?;
    Ok(q.mean()
        .iter()
        .zip(q.log_var())
        .zip(p.mean().iter().zip(p.log_var()))
        .map(|((mq, lq), (mp, lp))| {
            0.5 * ((lq.exp() + (mq - mp).powi(2)) / lp.exp() - 1.0 + (lp - lq))
        })
        .sum())
}

/// Records `z = μ + exp(log_var / 2) ⊙ η` on the tape, with `η` fixed.
pub fn rsample(tape: &mut Tape, mean: Var, log_var: Var, eta: Tensor) -> Result<Var, DistError> {
    let half = tape.scale(log_var, 0.5);
    let sd = tape.exp(half);
    let eta = tape.constant(eta);
    let noise = tape.mul(sd, eta)?;
    Ok(tape.add(mean, noise)?)
}

/// Per-row diagonal Gaussian log-density: `m×d` inputs give an `m×1` node.
pub fn gaussian_logpdf_rows(
    tape: &mut Tape,
    x: Var,
    mean: Var,
    log_var: Var,
) -> Result<Var, DistError> {
    let diff = tape.sub(x, mean)?;
    let sq = tape.square(diff);
    let neg_lv = tape.scale(log_var, -1.0);
    let prec = tape.exp(neg_lv);
    let quad = tape.mul(sq, prec)?;
    let sum = tape.add(quad, log_var)?;
    let half = tape.scale(sum, -0.5);
    let lp = tape.shift(half, -HALF_LN_2PI);
    Ok(tape.sum_cols(lp))
}

/// Per-row Bernoulli log-mass of a constant 0/1 matrix `r` under `probs`.
/// Probabilities are clamped into `[ε, 1 − ε]` first.
pub fn bernoulli_logpmf_rows(tape: &mut Tape, r: &Tensor, probs: Var) -> Result<Var, DistError> {
    let p = tape.clamp(probs, PROB_EPS, 1.0 - PROB_EPS);
    let lp = tape.log(p)?;
    let neg = tape.scale(p, -1.0);
    let q = tape.shift(neg, 1.0);
    let lq = tape.log(q)?;
    let rv = tape.constant(r.clone());
    let not_r = tape.constant(r.map(|v| 1.0 - v));
    let a = tape.mul(rv, lp)?;
    let b = tape.mul(not_r, lq)?;
    let s = tape.add(a, b)?;
    Ok(tape.sum_cols(s))
}

/// Weights of the affine map `u ↦ (mean(u), log_var(u))` that conditions the
/// latent prior on the auxiliary variables.
///
/// This is the Gaussian member of the conditionally factorial exponential
/// family: sufficient statistics `(z, z²)` with natural parameters that are
/// smooth functions of `u`. `weight` is `A × 2H` (first `H` columns give the
/// mean), `bias` is `1 × 2H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondPriorParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl CondPriorParams {
    pub fn zeros(aux_dim: usize, latent_dim: usize) -> Self {
        Self {
            weight: Tensor::zeros(aux_dim, 2 * latent_dim),
            bias: Tensor::zeros(1, 2 * latent_dim),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.bias.cols() / 2
    }

    pub fn aux_dim(&self) -> usize {
        self.weight.rows()
    }
}

pub fn cond_prior(u: &[f64], params: &CondPriorParams) -> Result<DiagGaussian, DistError> {
    check_dim("cond_prior aux", params.aux_dim(), u.len())?;
    let out = Tensor::row(u).matmul(&params.weight)?;
    let h = params.latent_dim();
    let raw: Vec<f64> = out
        .data()
        .iter()
        .zip(params.bias.data())
        .map(|(a, b)| a + b)
        .collect();
    DiagGaussian::new(raw[..h].to_vec(), raw[h..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const STD_AT_MEAN: f64 = -0.918_938_533_204_672_7;

    #[test]
    fn standard_normal_at_mean() {
        let g = DiagGaussian::standard(1);
        assert!((gaussian_logpdf(&[0.0], &g).unwrap() - STD_AT_MEAN).abs() < 1e-15);
        let g3 = DiagGaussian::new(vec![1.5, -2.0, 0.3], vec![0.0; 3]).unwrap();
        let v = gaussian_logpdf(&[1.5, -2.0, 0.3], &g3).unwrap();
        assert!((v - 3.0 * STD_AT_MEAN).abs() < 1e-14);
    }

    #[test]
    fn fixed_log_sigma_minus_two() {
        // log σ = −2 ⇒ log σ² = −4
        let g = DiagGaussian::new(vec![0.0], vec![-4.0]).unwrap();
        let expected = STD_AT_MEAN + 2.0 - 4f64.exp() / 2.0;
        assert!((gaussian_logpdf(&[1.0], &g).unwrap() - expected).abs() < 1e-12);
        // normalization oracle: midpoint quadrature of the density over ±8σ
        let sd = (-2f64).exp();
        let n = 200_000;
        let h = 16.0 * sd / n as f64;
        let mass: f64 = (0..n)
            .map(|i| {
                let x = -8.0 * sd + (i as f64 + 0.5) * h;
                gaussian_logpdf(&[x], &g).unwrap().exp() * h
            })
            .sum();
        assert!((mass - 1.0).abs() < 1e-4);
    }

    #[test]
    fn logpdf_integrates_to_one() {
        for (m, lv) in [(0.0, 0.0), (2.5, 1.3), (-1.0, -3.0)] {
            let g = DiagGaussian::new(vec![m], vec![lv]).unwrap();
            let sd = (0.5 * lv).exp();
            let n = 100_000;
            let h = 16.0 * sd / n as f64;
            let mass: f64 = (0..n)
                .map(|i| gaussian_logpdf(&[m - 8.0 * sd + (i as f64 + 0.5) * h], &g).unwrap().exp() * h)
                .sum();
            assert!((mass - 1.0).abs() < 1e-4, "mass {mass}");
        }
    }

    #[test]
    fn log_var_clamped() {
        let g = DiagGaussian::new(vec![0.0, 0.0], vec![-50.0, 50.0]).unwrap();
        assert_eq!(g.log_var(), &[LOG_VAR_MIN, LOG_VAR_MAX]);
        assert!(DiagGaussian::new(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn bernoulli_examples() {
        let half = BernoulliVec::new(vec![0.5]);
        assert_eq!(bernoulli_logpmf(&[1.0], &half).unwrap(), 0.5f64.ln());
        let b = BernoulliVec::new(vec![0.9, 0.9]);
        let v = bernoulli_logpmf(&[1.0, 0.0], &b).unwrap();
        assert!((v - (0.9f64.ln() + 0.1f64.ln())).abs() < 1e-12);
        let sat = BernoulliVec::new(vec![1.0; 4]);
        let v = bernoulli_logpmf(&[1.0; 4], &sat).unwrap();
        assert!((v - 4.0 * (1.0 - 1e-7f64).ln()).abs() < 1e-15);
        assert!(matches!(
            bernoulli_logpmf(&[0.5], &half),
            Err(DistError::NonBinary(_))
        ));
    }

    #[test]
    fn bernoulli_monotone_in_observed_prob() {
        let mut last = f64::NEG_INFINITY;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let v = bernoulli_logpmf(&[1.0, 0.0], &BernoulliVec::new(vec![p, 0.3])).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn kl_closed_form_cases() {
        let q = DiagGaussian::standard(3);
        assert_eq!(kl_diag_gaussians(&q, &q).unwrap(), 0.0);
        let p = DiagGaussian::new(vec![1.0], vec![0.0]).unwrap();
        assert!((kl_diag_gaussians(&DiagGaussian::standard(1), &p).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = DiagGaussian::new(vec![0.3, -1.0, 0.0, 2.0], vec![-0.5, 0.2, 1.0, -1.5]).unwrap();
        let p = DiagGaussian::new(vec![0.0, -0.5, 1.0, 1.5], vec![0.0, 0.5, -0.3, 0.1]).unwrap();
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = q.sample(&mut rng);
            let d = gaussian_logpdf(&z, &q).unwrap() - gaussian_logpdf(&z, &p).unwrap();
            s += d;
            s2 += d * d;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = kl_diag_gaussians(&q, &p).unwrap();
        assert!((mean - exact).abs() < 3.0 * se, "mc {mean} exact {exact} se {se}");
    }

    #[test]
    fn kl_nonnegative_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let mut g = || {
                DiagGaussian::new(
                    (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                    (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect(),
                )
                .unwrap()
            };
            let (q, p) = (g(), g());
            assert!(kl_diag_gaussians(&q, &p).unwrap() > 0.0);
        }
    }

    #[test]
    fn rsample_collapse_and_zero_noise() {
        let g = DiagGaussian::new(vec![1.0, -2.0], vec![-100.0, -100.0]).unwrap();
        for eta in [-5.0, -1.0, 0.0, 3.0, 5.0] {
            let z = g.sample_with(&[eta, eta]);
            for (zi, mi) in z.iter().zip(g.mean()) {
                assert!((zi - mi).abs() <= 5.0 * (-5f64).exp() + 1e-15);
            }
        }
        let g = DiagGaussian::new(vec![0.7], vec![2.0]).unwrap();
        assert_eq!(g.sample_with(&[0.0]), vec![0.7]);
    }

    #[test]
    fn rsample_mean_clt() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = DiagGaussian::new(vec![1.5], vec![0.8]).unwrap();
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| g.sample(&mut rng)[0]).sum::<f64>() / n as f64;
        let se = (0.8f64.exp() / n as f64).sqrt();
        assert!((mean - 1.5).abs() < 4.0 * se);
    }

    #[test]
    fn rsample_pathwise_gradient() {
        // d E[z] / dμ = 1 with common random numbers
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eta = Tensor::from_fn(64, 1, |_, _| rng.sample(StandardNormal));
        let mean_of = |mu: f64| {
            let mut t = Tape::new();
            let m = t.param(Tensor::filled(64, 1, mu));
            let lv = t.constant(Tensor::filled(64, 1, 0.4));
            let z = rsample(&mut t, m, lv, eta.clone()).unwrap();
            let avg = t.mean(z);
            (t.value(avg).item(), t.backward(avg).unwrap().get(m).sum())
        };
        let h = 1e-5;
        let fd = (mean_of(0.3 + h).0 - mean_of(0.3 - h).0) / (2.0 * h);
        assert!((fd - 1.0).abs() < 1e-8);
        assert!((mean_of(0.3).1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tape_densities_match_value_level() {
        let x = Tensor::from_rows(&[vec![0.1, -0.4], vec![1.0, 2.0]]).unwrap();
        let m = Tensor::from_rows(&[vec![0.0, 0.2], vec![0.5, 1.0]]).unwrap();
        let lv = Tensor::from_rows(&[vec![-1.0, 0.5], vec![0.0, -2.0]]).unwrap();
        let mut t = Tape::new();
        let (xv, mv, lvv) = (t.constant(x.clone()), t.constant(m.clone()), t.constant(lv.clone()));
        let lp = gaussian_logpdf_rows(&mut t, xv, mv, lvv).unwrap();
        for i in 0..2 {
            let g = DiagGaussian::new(m.row_slice(i).to_vec(), lv.row_slice(i).to_vec()).unwrap();
            let v = gaussian_logpdf(x.row_slice(i), &g).unwrap();
            assert!((t.value(lp).get(i, 0) - v).abs() < 1e-12);
        }

        let r = Tensor::from_rows(&[vec![1.0, 0.0, 1.0]]).unwrap();
        let p = t.constant(Tensor::row(&[0.2, 0.7, 1.0]));
        let lb = bernoulli_logpmf_rows(&mut t, &r, p).unwrap();
        let v = bernoulli_logpmf(r.data(), &BernoulliVec::new(vec![0.2, 0.7, 1.0])).unwrap();
        assert!((t.value(lb).item() - v).abs() < 1e-12);
    }

    #[test]
    fn cond_prior_cases() {
        let zero = CondPriorParams::zeros(2, 3);
        assert_eq!(cond_prior(&[0.4, -1.0], &zero).unwrap(), DiagGaussian::standard(3));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = CondPriorParams {
            weight: Tensor::from_fn(2, 6, |_, _| rng.gen_range(-1.0..1.0)),
            bias: Tensor::zeros(1, 6),
        };
        let a = cond_prior(&[0.4, -1.0], &params).unwrap();
        let b = cond_prior(&[0.5, -1.0], &params).unwrap();
        assert_ne!(a, b);

        // A = 1, unit weights, u = 2: every output of the affine map is 2
        let ones = CondPriorParams {
            weight: Tensor::filled(1, 4, 1.0),
            bias: Tensor::zeros(1, 4),
        };
        let g = cond_prior(&[2.0], &ones).unwrap();
        assert_eq!(g.mean(), &[2.0, 2.0]);
        assert_eq!(g.log_var(), &[2.0, 2.0]);
        assert!(cond_prior(&[1.0, 2.0], &ones).is_err());
    }
}
