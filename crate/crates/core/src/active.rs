//! Sequential feature acquisition driven by an information reward.
//!
//! The reward of querying feature `i` given observed set `O` is estimated in
//! latent space as
//! `E_{x_i} KL[q(Z | x_i, x_O) ‖ q(Z | x_O)] − E_{x_φ, x_i} KL[q(Z | x_φ, x_i, x_O) ‖ q(Z | x_φ, x_O)]`,
//! where `φ` is every other still-unobserved candidate and all draws come
//! from the model's own imputation distribution.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::dataio::MaskedMatrix;
use crate::distributions::{kl_diag_gaussians, DiagGaussian, DistError};
use crate::models::{Model, ModelError};

pub const DEFAULT_N_OUTER: usize = 10;
pub const DEFAULT_N_TARGET: usize = 10;

#[derive(Debug, Error)]
pub enum ActiveError {
    #[error("feature {0} is already observed")]
    AlreadyObserved(usize),
    #[error("feature {0} is not a candidate")]
    NotCandidate(usize),
    #[error("no candidates left to query")]
    NoCandidates,
    #[error("row {row} has {available} candidates, fewer than the {steps} requested steps")]
    TooManySteps { row: usize, available: usize, steps: usize },
    #[error("need {expected} level entries, got {got}")]
    Levels { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// What the reward needs from a model: a Gaussian latent posterior given
/// a partially observed row, and draws of `X` given latents.
pub trait LatentModel {
    fn input_dim(&self) -> usize;

    /// `q(Z | x_o)` per row of `x` / `r` (`n×D`).
    fn posteriors(&self, x: &Tensor, r: &Tensor) -> Result<Vec<DiagGaussian>, ActiveError>;

    /// One draw of `x ~ p(X | z)` per row of `z`.
    fn sample_data(&self, z: &Tensor, rng: &mut dyn RngCore) -> Result<Tensor, ActiveError>;
}

impl LatentModel for Model {
    fn input_dim(&self) -> usize {
        self.spec().input_dim
    }

    fn posteriors(&self, x: &Tensor, r: &Tensor) -> Result<Vec<DiagGaussian>, ActiveError> {
        let (m, lv) = self.encode_batch(x, r)?;
        (0..m.rows())
            .map(|i| Ok(DiagGaussian::new(m.row_slice(i).to_vec(), lv.row_slice(i).to_vec())?))
            .collect()
    }

    fn sample_data(&self, z: &Tensor, rng: &mut dyn RngCore) -> Result<Tensor, ActiveError> {
        Ok(Model::sample_data(self, z, rng)?)
    }
}

/// A linear-Gaussian factor model `x = W z + b + ε`, `z ~ N(0, I)`,
/// `ε ~ N(0, diag(noise_var))`, whose posterior is computed exactly. With a
/// single latent the posterior is one-dimensional and therefore diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussian {
    /// `D × 1` loadings.
    pub loadings: Vec<f64>,
    pub bias: Vec<f64>,
    pub noise_var: Vec<f64>,
}

impl LatentModel for LinearGaussian {
    fn input_dim(&self) -> usize {
        self.loadings.len()
    }

    fn posteriors(&self, x: &Tensor, r: &Tensor) -> Result<Vec<DiagGaussian>, ActiveError> {
        (0..x.rows())
            .map(|i| {
                let (mut prec, mut lin) = (1.0, 0.0);
                for j in 0..self.loadings.len() {
                    if r.get(i, j) != 0.0 {
                        let w = self.loadings[j];
                        prec += w * w / self.noise_var[j];
                        lin += w * (x.get(i, j) - self.bias[j]) / self.noise_var[j];
                    }
                }
                Ok(DiagGaussian::new(vec![lin / prec], vec![-prec.ln()])?)
            })
            .collect()
    }

    fn sample_data(&self, z: &Tensor, rng: &mut dyn RngCore) -> Result<Tensor, ActiveError> {
        Ok(Tensor::from_fn(z.rows(), self.loadings.len(), |i, j| {
            let eps: f64 = rng.sample(StandardNormal);
            self.loadings[j] * z.get(i, 0) + self.bias[j] + self.noise_var[j].sqrt() * eps
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionStep {
    pub step: usize,
    pub index: usize,
    pub value: f64,
    pub reward: f64,
}

/// One row's acquisition progress: current values, which are observed, and
/// which features may still be queried.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionState {
    x: Vec<f64>,
    observed: Vec<bool>,
    candidates: Vec<usize>,
    pub history: Vec<AcquisitionStep>,
}

impl AcquisitionState {
    /// Nothing observed; `candidates` may be queried.
    pub fn new(dim: usize, candidates: Vec<usize>) -> Self {
        let mut candidates = candidates;
        candidates.sort_unstable();
        candidates.dedup();
        Self {
            x: vec![0.0; dim],
            observed: vec![false; dim],
            candidates,
            history: Vec::new(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn observed(&self) -> Vec<usize> {
        (0..self.x.len()).filter(|&j| self.observed[j]).collect()
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn mask(&self) -> Vec<f64> {
        self.observed.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect()
    }

    /// Moves `index` from the candidates to the observed set.
    pub fn reveal(&mut self, index: usize, value: f64, reward: f64) -> Result<(), ActiveError> {
        if self.observed.get(index).copied().unwrap_or(false) {
            return Err(ActiveError::AlreadyObserved(index));
        }
        let pos = self
            .candidates
            .iter()
            .position(|&c| c == index)
            .ok_or(ActiveError::NotCandidate(index))?;
        self.candidates.remove(pos);
        self.x[index] = value;
        self.observed[index] = true;
        self.history.push(AcquisitionStep {
            step: self.history.len(),
            index,
            value,
            reward,
        });
        Ok(())
    }
}

fn draw_latents(posts: &[DiagGaussian], per: usize, rng: &mut dyn RngCore) -> Tensor {
    let h = posts[0].dim();
    let mut z = Tensor::zeros(posts.len() * per, h);
    for (p, q) in posts.iter().enumerate() {
        let sd: Vec<f64> = q.log_var().iter().map(|lv| (0.5 * lv).exp()).collect();
        for s in 0..per {
            let row = z.row_slice_mut(p * per + s);
            for (j, v) in row.iter_mut().enumerate() {
                *v = q.mean()[j] + sd[j] * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    z
}

/// Monte-Carlo information reward of querying feature `i`.
pub fn info_reward<M: LatentModel + ?Sized>(
    model: &M,
    state: &AcquisitionState,
    i: usize,
    n_outer: usize,
    n_target: usize,
    rng: &mut dyn RngCore,
) -> Result<f64, ActiveError> {
    if state.observed[i] {
        return Err(ActiveError::AlreadyObserved(i));
    }
    if !state.candidates.contains(&i) {
        return Err(ActiveError::NotCandidate(i));
    }
    let n_outer = n_outer.max(1);
    let n_target = n_target.max(1);
    let d = state.x.len();
    let r0 = state.mask();
    let phi: Vec<usize> = state.candidates.iter().copied().filter(|&c| c != i).collect();

    let q0 = model.posteriors(&Tensor::row(&state.x), &Tensor::row(&r0))?.remove(0);
    let z_outer = draw_latents(std::slice::from_ref(&q0), n_outer, rng);
    let x_outer = model.sample_data(&z_outer, rng)?;

    let mut xi_rows = Tensor::zeros(n_outer, d);
    let mut ri_rows = Tensor::zeros(n_outer, d);
    for k in 0..n_outer {
        xi_rows.row_slice_mut(k).copy_from_slice(&state.x);
        xi_rows.set(k, i, x_outer.get(k, i));
        ri_rows.row_slice_mut(k).copy_from_slice(&r0);
        ri_rows.set(k, i, 1.0);
    }
    let q_i = model.posteriors(&xi_rows, &ri_rows)?;

    let mut second = vec![0.0; n_outer];
    if !phi.is_empty() {
        let z_inner = draw_latents(&q_i, n_target, rng);
        let x_inner = model.sample_data(&z_inner, rng)?;
        let n = n_outer * n_target;
        let mut with_i = Tensor::zeros(n, d);
        let mut r_with = Tensor::zeros(n, d);
        let mut r_without = Tensor::zeros(n, d);
        for row in 0..n {
            let k = row / n_target;
            with_i.row_slice_mut(row).copy_from_slice(xi_rows.row_slice(k));
            r_with.row_slice_mut(row).copy_from_slice(ri_rows.row_slice(k));
            r_without.row_slice_mut(row).copy_from_slice(&r0);
            for &j in &phi {
                with_i.set(row, j, x_inner.get(row, j));
                r_with.set(row, j, 1.0);
                r_without.set(row, j, 1.0);
            }
        }
        let q_full = model.posteriors(&with_i, &r_with)?;
        // x_i stays in the values but is masked out, so it is ignored
        let q_phi = model.posteriors(&with_i, &r_without)?;
        for row in 0..n {
            second[row / n_target] += kl_diag_gaussians(&q_full[row], &q_phi[row])? / n_target as f64;
        }
    }

    let mut total = 0.0;
    for k in 0..n_outer {
        total += kl_diag_gaussians(&q_i[k], &q0)? - second[k];
    }
    Ok(total / n_outer as f64)
}

/// The candidate with the highest reward (lowest index on ties) and that
/// reward. Every candidate is scored with the same random stream, so the
/// comparison uses common random numbers.
pub fn select_next<M: LatentModel + ?Sized>(
    model: &M,
    state: &AcquisitionState,
    n_outer: usize,
    n_target: usize,
    rng: &mut dyn RngCore,
) -> Result<(usize, f64), ActiveError> {
    let stream = rng.next_u64();
    let mut best: Option<(usize, f64)> = None;
    for &c in &state.candidates {
        let mut crn = ChaCha8Rng::seed_from_u64(stream);
        let r = info_reward(model, state, c, n_outer, n_target, &mut crn)?;
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((c, r));
        }
    }
    best.ok_or(ActiveError::NoCandidates)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub steps: usize,
    pub n_outer: usize,
    pub n_target: usize,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            steps: 1,
            n_outer: DEFAULT_N_OUTER,
            n_target: DEFAULT_N_TARGET,
            seed: 0,
        }
    }
}

/// Level differences between consecutive queries, split by whether the
/// earlier response was correct (value ≥ 0.5).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelChanges {
    pub after_correct: Vec<f64>,
    pub after_incorrect: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionRun {
    pub rows: Vec<Vec<AcquisitionStep>>,
    pub level_changes: Option<LevelChanges>,
}

/// Runs `config.steps` rounds of select and reveal on every row. The
/// observed entries of `data` are the ground truth a query reveals and the
/// only features that may be queried. `levels` gives one difficulty level
/// per column.
pub fn run_acquisition<M: LatentModel + ?Sized>(
    model: &M,
    data: &MaskedMatrix,
    config: &AcquisitionConfig,
    levels: Option<&[f64]>,
) -> Result<AcquisitionRun, ActiveError> {
    let d = data.n_cols();
    if let Some(l) = levels {
        if l.len() != d {
            return Err(ActiveError::Levels {
                expected: d,
                got: l.len(),
            });
        }
    }
    let mut rows = Vec::with_capacity(data.n_rows());
    let mut changes = LevelChanges::default();
    for row in 0..data.n_rows() {
        let candidates: Vec<usize> = (0..d).filter(|&j| data.is_observed(row, j)).collect();
        if candidates.len() < config.steps {
            return Err(ActiveError::TooManySteps {
                row,
                available: candidates.len(),
                steps: config.steps,
            });
        }
        let mut state = AcquisitionState::new(d, candidates);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(row as u64));
        for _ in 0..config.steps {
            let (i, reward) = select_next(model, &state, config.n_outer, config.n_target, &mut rng)?;
            let value = data.get(row, i).expect("candidates are observed");
            state.reveal(i, value, reward)?;
        }
        if let Some(l) = levels {
            for pair in state.history.windows(2) {
                let delta = l[pair[1].index] - l[pair[0].index];
                if pair[0].value >= 0.5 {
                    changes.after_correct.push(delta);
                } else {
                    changes.after_incorrect.push(delta);
                }
            }
        }
        rows.push(state.history);
    }
    Ok(AcquisitionRun {
        rows,
        level_changes: levels.map(|_| changes),
    })
}
