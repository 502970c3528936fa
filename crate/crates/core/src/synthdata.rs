//! Synthetic three-variable MNAR benchmarks.
//!
//! Three latents `Z₁, Z₂, Z₃ ~ N(0, 1)` drive `X₁` linearly and `X₂`, `X₃`
//! through a random-coefficient nonlinearity. `X₁` stays fully observed;
//! `X₂` and `X₃` are masked either by their own sign (self-masking) or by
//! the sign of a random linear function of the variable and the latents.
//! Masks are decided on the raw values, then all columns are standardized
//! with statistics from observed entries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::dataio::{fit_standardizer, ColumnAffine, DataError, MaskedMatrix};

pub const DEFAULT_NOISE_VAR: f64 = 0.01;
const MAX_MASK_DRAWS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dataset {
    A,
    B,
    C,
}

impl Dataset {
    pub const ALL: [Dataset; 3] = [Dataset::A, Dataset::B, Dataset::C];

    fn param_seed(self) -> u64 {
        match self {
            Dataset::A => 0xA11CE,
            Dataset::B => 0xB0B,
            Dataset::C => 0xC0FFEE,
        }
    }

    /// Self-masking for A, latent-dependent self-masking for B and C.
    pub fn default_mask(self) -> MaskKind {
        match self {
            Dataset::A => MaskKind::SelfMask,
            Dataset::B | Dataset::C => MaskKind::LatentSelfMask { coeffs: None },
        }
    }
}

impl std::str::FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Dataset::A),
            "B" => Ok(Dataset::B),
            "C" => Ok(Dataset::C),
            other => Err(format!("unknown synthetic dataset `{other}` (expected A, B or C)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum MaskKind {
    /// `X_i` missing iff `X_i > 0`.
    SelfMask,
    /// `X_i` missing iff `c₀·X_i + c₁·Z₁ + c₂·Z₂ + c₃·Z₃ > 0`. Coefficients
    /// are drawn when not given (rows for `X₂` and `X₃`).
    LatentSelfMask { coeffs: Option<[[f64; 4]; 2]> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dataset: Dataset,
    pub n: usize,
    pub seed: u64,
    pub noise_var: f64,
    pub mask: MaskKind,
}

impl SynthSpec {
    pub fn new(dataset: Dataset, n: usize, seed: u64) -> Self {
        Self {
            dataset,
            n,
            seed,
            noise_var: DEFAULT_NOISE_VAR,
            mask: dataset.default_mask(),
        }
    }
}

/// Coefficients of `f(v) = a·tanh(b·⟨p, v⟩) + c·⟨q, v⟩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nonlinear {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Nonlinear {
    pub fn eval(&self, v: &[f64]) -> f64 {
        let dot = |w: &[f64]| w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        self.a * (self.b * dot(&self.p)).tanh() + self.c * dot(&self.q)
    }

    fn draw<R: Rng + ?Sized>(inputs: usize, rng: &mut R) -> Self {
        let unit = |rng: &mut R| {
            let v: Vec<f64> = (0..inputs).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect::<Vec<_>>()
        };
        let sign = |rng: &mut R| if rng.gen::<bool>() { 1.0 } else { -1.0 };
        Self {
            a: sign(rng) * rng.gen_range(1.0..2.0),
            b: rng.gen_range(1.5..3.0),
            c: sign(rng) * rng.gen_range(0.3..0.8),
            p: unit(rng),
            q: unit(rng),
        }
    }
}

/// Generator parameters: `X₁ = ⟨w, Z⟩ + ε₁`, `X₂ = θ₁(X₁, Z) + ε₂`,
/// `X₃ = θ₂(X₁, X₂, Z) + ε₃`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub w: [f64; 3],
    pub theta1: Nonlinear,
    pub theta2: Nonlinear,
}

impl GeneratorParams {
    /// The fixed parameter set of a benchmark dataset.
    pub fn for_dataset(dataset: Dataset) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(dataset.param_seed());
        let mut w = [0.0; 3];
        for v in &mut w {
            *v = rng.sample(StandardNormal);
        }
        Self {
            w,
            theta1: Nonlinear::draw(4, &mut rng),
            theta2: Nonlinear::draw(5, &mut rng),
        }
    }
}

/// Sidecar record of everything needed to regenerate a set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub spec: SynthSpec,
    pub params: GeneratorParams,
    /// Mask coefficients actually used (latent-dependent masking only).
    pub mask_coeffs: Option<[[f64; 4]; 2]>,
    /// Standardization applied to `X` (observed-entry statistics).
    pub transform: Option<ColumnAffine>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompleteSynthSet {
    /// `n × 3` complete values (standardized once [`standardize`] ran).
    pub x: Tensor,
    /// `n × 3` observation mask; column 0 is all ones.
    pub r: Tensor,
    /// `n × 3` latents.
    pub z: Tensor,
    pub record: GeneratorRecord,
}

impl CompleteSynthSet {
    /// The partially observed data with `X₁` also exposed as auxiliary
    /// column `aux_x1`.
    pub fn masked(&self) -> Result<MaskedMatrix, DataError> {
        let aux = Tensor::column(&self.x.column_values(0));
        MaskedMatrix::with_names(
            self.x.clone(),
            self.r.clone(),
            Some(aux),
            vec!["x1".into(), "x2".into(), "x3".into()],
            vec!["aux_x1".into()],
        )
    }

    /// All values observed.
    pub fn complete(&self) -> Result<MaskedMatrix, DataError> {
        MaskedMatrix::with_names(
            self.x.clone(),
            Tensor::filled(self.x.rows(), 3, 1.0),
            Some(Tensor::column(&self.x.column_values(0))),
            vec!["x1".into(), "x2".into(), "x3".into()],
            vec!["aux_x1".into()],
        )
    }

    pub fn observed_fraction(&self, col: usize) -> f64 {
        self.r.column_values(col).iter().sum::<f64>() / self.r.rows() as f64
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("sample count must be positive")]
    EmptySample,
    #[error("could not draw mask coefficients with observed fraction in (0.05, 0.95)")]
    DegenerateMask,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Raw complete data, all entries observed.
pub fn gen_complete(spec: &SynthSpec) -> Result<CompleteSynthSet, SynthError> {
    gen_complete_with(spec, GeneratorParams::for_dataset(spec.dataset))
}

pub fn gen_complete_with(
    spec: &SynthSpec,
    params: GeneratorParams,
) -> Result<CompleteSynthSet, SynthError> {
    if spec.n == 0 {
        return Err(SynthError::EmptySample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sd = spec.noise_var.sqrt();
    let mut x = Tensor::zeros(spec.n, 3);
    let mut z = Tensor::zeros(spec.n, 3);
    for i in 0..spec.n {
        let zi: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let mut eps = || sd * rng.sample::<f64, _>(StandardNormal);
        let x1 = params.w.iter().zip(&zi).map(|(a, b)| a * b).sum::<f64>() + eps();
        let x2 = params.theta1.eval(&[x1, zi[0], zi[1], zi[2]]) + eps();
        let x3 = params.theta2.eval(&[x1, x2, zi[0], zi[1], zi[2]]) + eps();
        x.row_slice_mut(i).copy_from_slice(&[x1, x2, x3]);
        z.row_slice_mut(i).copy_from_slice(&zi);
    }
    Ok(CompleteSynthSet {
        x,
        r: Tensor::filled(spec.n, 3, 1.0),
        z,
        record: GeneratorRecord {
            spec: spec.clone(),
            params,
            mask_coeffs: None,
            transform: None,
        },
    })
}

/// `R_i = 1` iff `X_i ≤ 0` for `i ∈ {2, 3}`; `X₁` stays observed.
pub fn apply_self_mask(mut set: CompleteSynthSet) -> CompleteSynthSet {
    for i in 0..set.x.rows() {
        set.r.set(i, 0, 1.0);
        for j in 1..3 {
            set.r.set(i, j, if set.x.get(i, j) <= 0.0 { 1.0 } else { 0.0 });
        }
    }
    set
}

/// `R_i = 1` iff `g_i(X_i, Z) ≤ 0` for `i ∈ {2, 3}`. Ties count as observed.
pub fn apply_latent_self_mask(mut set: CompleteSynthSet, coeffs: [[f64; 4]; 2]) -> CompleteSynthSet {
    for i in 0..set.x.rows() {
        set.r.set(i, 0, 1.0);
        for (k, c) in coeffs.iter().enumerate() {
            let j = k + 1;
            let g = c[0] * set.x.get(i, j)
                + c[1] * set.z.get(i, 0)
                + c[2] * set.z.get(i, 1)
                + c[3] * set.z.get(i, 2);
            set.r.set(i, j, if g <= 0.0 { 1.0 } else { 0.0 });
        }
    }
    set.record.mask_coeffs = Some(coeffs);
    set
}

/// Draws latent-mask coefficients until both masked columns keep an
/// observed fraction inside `(0.05, 0.95)`.
pub fn draw_latent_mask(set: CompleteSynthSet) -> Result<CompleteSynthSet, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(set.record.spec.dataset.param_seed() ^ 0x5EED_3A5C);
    for _ in 0..MAX_MASK_DRAWS {
        let mut coeffs = [[0.0; 4]; 2];
        for row in &mut coeffs {
            for c in row.iter_mut() {
                *c = rng.sample(StandardNormal);
            }
        }
        let candidate = apply_latent_self_mask(set.clone(), coeffs);
        if (1..3).all(|j| {
            let f = candidate.observed_fraction(j);
            f > 0.05 && f < 0.95
        }) {
            return Ok(candidate);
        }
    }
    Err(SynthError::DegenerateMask)
}

/// Standardizes every column using statistics of its observed entries.
pub fn standardize(mut set: CompleteSynthSet) -> Result<CompleteSynthSet, SynthError> {
    let view = MaskedMatrix::new(set.x.clone(), set.r.clone(), None)?;
    let t = fit_standardizer(&view)?;
    set.x = t.forward(&set.x);
    set.record.transform = Some(t);
    Ok(set)
}

/// Generate, mask per `spec.mask`, then standardize.
pub fn generate(spec: &SynthSpec) -> Result<CompleteSynthSet, SynthError> {
    let set = gen_complete(spec)?;
    let masked = match &spec.mask {
        MaskKind::SelfMask => apply_self_mask(set),
        MaskKind::LatentSelfMask { coeffs: Some(c) } => apply_latent_self_mask(set, *c),
        MaskKind::LatentSelfMask { coeffs: None } => draw_latent_mask(set)?,
    };
    standardize(masked)
}

/// A training set from `spec` plus `n_test` complete rows from the same
/// generator under an independent seed, standardized with the training
/// transform and masked with the same mechanism.
pub fn generate_pair(spec: &SynthSpec, n_test: usize) -> Result<(CompleteSynthSet, CompleteSynthSet), SynthError> {
    let train = generate(spec)?;
    let test_spec = SynthSpec {
        n: n_test,
        seed: spec.seed ^ 0x7E57_0000_0000_0001,
        mask: match &spec.mask {
            MaskKind::LatentSelfMask { .. } => MaskKind::LatentSelfMask {
                coeffs: train.record.mask_coeffs,
            },
            other => other.clone(),
        },
        ..spec.clone()
    };
    let raw = gen_complete(&test_spec)?;
    let mut test = match &test_spec.mask {
        MaskKind::SelfMask => apply_self_mask(raw),
        MaskKind::LatentSelfMask { coeffs } => {
            apply_latent_self_mask(raw, coeffs.expect("training set records its coefficients"))
        }
    };
    let t = train.record.transform.clone().expect("generate standardizes");
    test.x = t.forward(&test.x);
    test.record.transform = Some(t);
    Ok((train, test))
}
