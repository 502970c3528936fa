//! Evaluation metrics: imputation error, sample-based distances, the
//! decoder injectivity check and the level-change significance test.

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::dataio::ColumnAffine;
use crate::models::{Model, ModelError};

/// Largest `D` for which every row subset is enumerated.
pub const EXHAUSTIVE_SUBSET_LIMIT: usize = 12;
/// Singular values below `max_dim · σ_max · RANK_TOLERANCE` count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no scored entries")]
    NoScored,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("both samples have zero variance")]
    ZeroVariance,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
    pub n_repeats: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_column: Option<Vec<Option<f64>>>,
}

impl MetricReport {
    pub fn single(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            std_error: 0.0,
            n_repeats: 1,
            per_column: None,
        }
    }

    /// Mean over repeats with the standard error of the mean.
    pub fn from_repeats(name: impl Into<String>, values: &[f64]) -> Result<Self, EvalError> {
        if values.is_empty() {
            return Err(EvalError::TooFewSamples { needed: 1, got: 0 });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_error = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            name: name.into(),
            value: mean,
            std_error,
            n_repeats: values.len(),
            per_column: None,
        })
    }
}

fn check_same_shape(pred: &Tensor, truth: &Tensor, mask: &Tensor) -> Result<(), EvalError> {
    if pred.shape() != truth.shape() || pred.shape() != mask.shape() {
        return Err(EvalError::Shape(format!(
            "pred {:?}, truth {:?}, mask {:?}",
            pred.shape(),
            truth.shape(),
            mask.shape()
        )));
    }
    Ok(())
}

fn column_squared_errors(
    pred: &Tensor,
    truth: &Tensor,
    mask: &Tensor,
    scale: Option<&ColumnAffine>,
) -> Result<Vec<(f64, usize)>, EvalError> {
    check_same_shape(pred, truth, mask)?;
    let (pred, truth) = match scale {
        Some(t) => (t.inverse(pred), t.inverse(truth)),
        None => (pred.clone(), truth.clone()),
    };
    let mut cols = vec![(0.0, 0usize); pred.cols()];
    for i in 0..pred.rows() {
        for (j, c) in cols.iter_mut().enumerate() {
            if mask.get(i, j) != 0.0 {
                c.0 += (pred.get(i, j) - truth.get(i, j)).powi(2);
                c.1 += 1;
            }
        }
    }
    Ok(cols)
}

fn per_column(cols: &[(f64, usize)]) -> Vec<Option<f64>> {
    cols.iter()
        .map(|&(s, n)| (n > 0).then(|| s / n as f64))
        .collect()
}

/// Mean squared error over entries with `eval_mask ≠ 0`. When `scale` is
/// given, both matrices are mapped back through its inverse first.
pub fn mse(
    pred: &Tensor,
    truth: &Tensor,
    eval_mask: &Tensor,
    scale: Option<&ColumnAffine>,
) -> Result<MetricReport, EvalError> {
    let cols = column_squared_errors(pred, truth, eval_mask, scale)?;
    let (total, n) = cols.iter().fold((0.0, 0), |(s, c), &(cs, cn)| (s + cs, c + cn));
    if n == 0 {
        return Err(EvalError::NoScored);
    }
    let mut report = MetricReport::single("mse", total / n as f64);
    report.per_column = Some(per_column(&cols));
    Ok(report)
}

/// Unweighted mean over columns of the per-column MSE. Columns without a
/// scored entry are left out.
pub fn debiased_mse(
    pred: &Tensor,
    truth: &Tensor,
    eval_mask: &Tensor,
    scale: Option<&ColumnAffine>,
) -> Result<MetricReport, EvalError> {
    let cols = column_squared_errors(pred, truth, eval_mask, scale)?;
    let per = per_column(&cols);
    let scored: Vec<f64> = per.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(EvalError::NoScored);
    }
    let mut report = MetricReport::single("debiased_mse", scored.iter().sum::<f64>() / scored.len() as f64);
    report.per_column = Some(per);
    Ok(report)
}

fn mean_pair_distance(a: &Tensor, ia: &[usize], b: &Tensor, ib: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in ia {
        let ra = a.row_slice(i);
        for &j in ib {
            let rb = b.row_slice(j);
            total += ra
                .iter()
                .zip(rb)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
        }
    }
    total / (ia.len() * ib.len()) as f64
}

fn energy_indexed(a: &Tensor, ia: &[usize], b: &Tensor, ib: &[usize]) -> f64 {
    2.0 * mean_pair_distance(a, ia, b, ib) - mean_pair_distance(a, ia, a, ia) - mean_pair_distance(b, ib, b, ib)
}

fn check_samples(a: &Tensor, b: &Tensor) -> Result<(), EvalError> {
    if a.cols() != b.cols() {
        return Err(EvalError::Shape(format!(
            "sample dimensions {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    let got = a.rows().min(b.rows());
    if got < 2 {
        return Err(EvalError::TooFewSamples { needed: 2, got });
    }
    Ok(())
}

/// `2·E‖a−b‖ − E‖a−a′‖ − E‖b−b′‖` with every expectation an average over
/// all ordered pairs (diagonal included).
pub fn energy_distance(a: &Tensor, b: &Tensor) -> Result<f64, EvalError> {
    check_samples(a, b)?;
    let ia: Vec<usize> = (0..a.rows()).collect();
    let ib: Vec<usize> = (0..b.rows()).collect();
    Ok(energy_indexed(a, &ia, b, &ib))
}

/// Energy distance with a bootstrap standard error over `n_bootstrap`
/// resamples of both sets.
pub fn energy_distance_report<R: Rng + ?Sized>(
    name: impl Into<String>,
    a: &Tensor,
    b: &Tensor,
    n_bootstrap: usize,
    rng: &mut R,
) -> Result<MetricReport, EvalError> {
    let value = energy_distance(a, b)?;
    let mut reps = Vec::with_capacity(n_bootstrap);
    for _ in 0..n_bootstrap {
        let ia: Vec<usize> = (0..a.rows()).map(|_| rng.gen_range(0..a.rows())).collect();
        let ib: Vec<usize> = (0..b.rows()).map(|_| rng.gen_range(0..b.rows())).collect();
        reps.push(energy_indexed(a, &ia, b, &ib));
    }
    let std_error = if reps.len() > 1 {
        let m = reps.iter().sum::<f64>() / reps.len() as f64;
        (reps.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(MetricReport {
        name: name.into(),
        value,
        std_error,
        n_repeats: 1,
        per_column: None,
    })
}

/// Numerical rank: singular values above `max(rows, cols) · σ_max · 1e-10`.
pub fn numerical_rank(w: &Tensor) -> usize {
    if w.is_empty() {
        return 0;
    }
    let m = DMatrix::from_row_slice(w.rows(), w.cols(), w.data());
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = w.rows().max(w.cols()) as f64 * smax * RANK_TOLERANCE;
    sv.iter().filter(|&&s| s > tol).count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub rows: Vec<usize>,
    pub rank: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectivityVerdict {
    /// Columns of `W`: the rank every checked subset must reach.
    pub d0: usize,
    pub sizes: Vec<usize>,
    pub exhaustive: bool,
    pub rank_tolerance: f64,
    pub subsets: Vec<SubsetResult>,
}

impl InjectivityVerdict {
    pub fn pass(&self) -> bool {
        self.subsets.iter().all(|s| s.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &SubsetResult> {
        self.subsets.iter().filter(|s| !s.pass)
    }
}

/// Whether `W` restricted to `rows` has full column rank.
pub fn check_subset(w: &Tensor, rows: &[usize]) -> SubsetResult {
    let rank = numerical_rank(&w.select_rows(rows));
    SubsetResult {
        rows: rows.to_vec(),
        rank,
        pass: rank == w.cols(),
    }
}

fn push_combinations(n: usize, k: usize, out: &mut Vec<Vec<usize>>) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Checks that `W` (`D × D₀`) keeps full column rank on row subsets of size
/// at least `min_size`. All subsets are checked when `D ≤ 12`, otherwise
/// `n_random_subsets` drawn with `seed`.
pub fn injectivity_check(
    w: &Tensor,
    min_size: usize,
    n_random_subsets: usize,
    seed: u64,
) -> Result<InjectivityVerdict, EvalError> {
    let (d, d0) = w.shape();
    if d < d0 {
        return Err(EvalError::Shape(format!("W is {d}x{d0}; need rows >= columns")));
    }
    let lo = min_size.max(1);
    let sizes: Vec<usize> = (lo..=d).collect();
    let exhaustive = d <= EXHAUSTIVE_SUBSET_LIMIT;
    let mut subsets = Vec::new();
    if exhaustive {
        for &k in &sizes {
            push_combinations(d, k, &mut subsets);
        }
    } else if !sizes.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_random_subsets {
            let k = sizes[rng.gen_range(0..sizes.len())];
            let mut rows = sample_indices(&mut rng, d, k).into_vec();
            rows.sort_unstable();
            subsets.push(rows);
        }
    }
    Ok(InjectivityVerdict {
        d0,
        sizes,
        exhaustive,
        rank_tolerance: RANK_TOLERANCE,
        subsets: subsets.iter().map(|rows| check_subset(w, rows)).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelChangeTest {
    pub mean_after_correct: f64,
    pub mean_after_incorrect: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Two-sided Student-t tail probability `P(|T| ≥ |t|)` with `df` degrees
/// of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Welch two-sample t-test on level changes after correct versus incorrect
/// responses.
pub fn level_change_test(after_correct: &[f64], after_incorrect: &[f64]) -> Result<LevelChangeTest, EvalError> {
    let got = after_correct.len().min(after_incorrect.len());
    if got < 2 {
        return Err(EvalError::TooFewSamples { needed: 2, got });
    }
    let (m1, v1) = mean_var(after_correct);
    let (m2, v2) = mean_var(after_incorrect);
    let (n1, n2) = (after_correct.len() as f64, after_incorrect.len() as f64);
    let (s1, s2) = (v1 / n1, v2 / n2);
    if s1 + s2 == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let t = (m1 - m2) / (s1 + s2).sqrt();
    let df = (s1 + s2).powi(2) / (s1 * s1 / (n1 - 1.0) + s2 * s2 / (n2 - 1.0));
    Ok(LevelChangeTest {
        mean_after_correct: m1,
        mean_after_incorrect: m2,
        t,
        df,
        p_value: student_t_two_sided(t, df),
    })
}

fn project(t: &Tensor, columns: &[usize]) -> Tensor {
    Tensor::from_fn(t.rows(), columns.len(), |i, j| t.get(i, columns[j]))
}

/// Energy distance of each named sample set to `truth` on `columns`, sorted
/// from best (smallest) to worst.
pub fn probe_samples<R: Rng + ?Sized>(
    samples: &[(String, Tensor)],
    truth: &Tensor,
    columns: &[usize],
    n_bootstrap: usize,
    rng: &mut R,
) -> Result<Vec<MetricReport>, EvalError> {
    let truth = project(truth, columns);
    let mut out = samples
        .iter()
        .map(|(name, s)| energy_distance_report(name.clone(), &project(s, columns), &truth, n_bootstrap, rng))
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(out)
}

/// Draws one generated row per row of `aux` from each model and ranks the
/// models by energy distance to the complete held-out data on `columns`.
pub fn identifiability_probe<R: Rng + ?Sized>(
    models: &[(&str, &Model)],
    truth: &Tensor,
    aux: &Tensor,
    columns: &[usize],
    n_bootstrap: usize,
    rng: &mut R,
) -> Result<Vec<MetricReport>, EvalError> {
    let samples = models
        .iter()
        .map(|(name, m)| Ok((name.to_string(), m.generate_for_aux(aux, rng)?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    probe_samples(&samples, truth, columns, n_bootstrap, rng)
}
