//! Partially observed data matrices, CSV ingestion, splits and rescaling.
//!
//! CSV layout: a header row, one column per variable, empty cell for a
//! missing entry. Columns whose header starts with `aux_` hold the fully
//! observed auxiliary matrix `U`. Numbers are written in the shortest
//! representation that round-trips, lines end with `\n`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;

pub const AUX_PREFIX: &str = "aux_";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: expected {expected} cells, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: auxiliary column `{column}` must not be empty")]
    MissingAux { line: usize, column: String },
    #[error("line {line}, column `{column}`: `{cell}` is not a number")]
    NonNumeric {
        line: usize,
        column: String,
        cell: String,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("split `{0}` has a positive fraction but received no units")]
    EmptySplit(&'static str),
    #[error("observed value {value} outside rating range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("auxiliary metadata requested but the data has no aux_ columns")]
    NoMetadata,
    #[error("column {0} has zero variance over its observed entries")]
    ZeroVariance(usize),
    #[error("column {0} has no observed entries")]
    EmptyColumn(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Binary,
}

/// Where the auxiliary variables `U` of the conditional prior come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxSource {
    /// Fully observed `aux_` columns of the data.
    Metadata,
    /// The observation mask itself, `U := R`.
    Mask,
}

/// `n × D` values with an observation mask and optional `n × A` auxiliary data.
///
/// Unobserved entries are stored as `0.0`; their values never matter.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedMatrix {
    values: Tensor,
    mask: Tensor,
    aux: Option<Tensor>,
    columns: Vec<String>,
    aux_columns: Vec<String>,
    kinds: Vec<ColumnKind>,
}

impl MaskedMatrix {
    pub fn new(values: Tensor, mask: Tensor, aux: Option<Tensor>) -> Result<Self, DataError> {
        let columns = (0..values.cols()).map(|j| format!("x{}", j + 1)).collect();
        let aux_columns = aux
            .as_ref()
            .map(|a| (0..a.cols()).map(|j| format!("{AUX_PREFIX}{}", j + 1)).collect())
            .unwrap_or_default();
        Self::with_names(values, mask, aux, columns, aux_columns)
    }

    pub fn with_names(
        values: Tensor,
        mask: Tensor,
        aux: Option<Tensor>,
        columns: Vec<String>,
        aux_columns: Vec<String>,
    ) -> Result<Self, DataError> {
        if values.shape() != mask.shape() {
            return Err(DataError::Shape(format!(
                "values {:?} vs mask {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        if columns.len() != values.cols() {
            return Err(DataError::Shape(format!(
                "{} column names for {} columns",
                columns.len(),
                values.cols()
            )));
        }
        match &aux {
            Some(a) if a.rows() != values.rows() || a.cols() != aux_columns.len() => {
                return Err(DataError::Shape(format!(
                    "aux {:?} with {} names for {} rows",
                    a.shape(),
                    aux_columns.len(),
                    values.rows()
                )));
            }
            None if !aux_columns.is_empty() => {
                return Err(DataError::Shape("aux names without aux data".into()));
            }
            _ => {}
        }
        if let Some(&bad) = mask.data().iter().find(|&&m| m != 0.0 && m != 1.0) {
            return Err(DataError::Shape(format!("mask entry {bad} is not 0/1")));
        }
        let values = values.zip_map(&mask, |v, m| if m == 1.0 { v } else { 0.0 });
        let kinds = (0..values.cols())
            .map(|j| {
                let mut any = false;
                let binary = (0..values.rows()).all(|i| {
                    if mask.get(i, j) == 1.0 {
                        any = true;
                        let v = values.get(i, j);
                        v == 0.0 || v == 1.0
                    } else {
                        true
                    }
                });
                if any && binary {
                    ColumnKind::Binary
                } else {
                    ColumnKind::Continuous
                }
            })
            .collect();
        Ok(Self {
            values,
            mask,
            aux,
            columns,
            aux_columns,
            kinds,
        })
    }

    /// Fully observed data.
    pub fn complete(values: Tensor, aux: Option<Tensor>) -> Result<Self, DataError> {
        let mask = Tensor::filled(values.rows(), values.cols(), 1.0);
        Self::new(values, mask, aux)
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }

    pub fn aux(&self) -> Option<&Tensor> {
        self.aux.as_ref()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn aux_columns(&self) -> &[String] {
        &self.aux_columns
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask.get(i, j) == 1.0
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.is_observed(i, j).then(|| self.values.get(i, j))
    }

    pub fn observed_count(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m == 1.0).count()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(idx),
            mask: self.mask.select_rows(idx),
            aux: self.aux.as_ref().map(|a| a.select_rows(idx)),
            columns: self.columns.clone(),
            aux_columns: self.aux_columns.clone(),
            kinds: self.kinds.clone(),
        }
    }

    /// Same values with a different mask. Entries newly marked observed must
    /// be supplied through `values`.
    pub fn with_mask(&self, mask: Tensor) -> Result<Self, DataError> {
        Self::with_names(
            self.values.clone(),
            mask,
            self.aux.clone(),
            self.columns.clone(),
            self.aux_columns.clone(),
        )
    }

    pub fn with_aux(&self, aux: Tensor, names: Vec<String>) -> Result<Self, DataError> {
        Self::with_names(
            self.values.clone(),
            self.mask.clone(),
            Some(aux),
            self.columns.clone(),
            names,
        )
    }

    pub fn with_values(&self, values: Tensor) -> Result<Self, DataError> {
        Self::with_names(
            values,
            self.mask.clone(),
            self.aux.clone(),
            self.columns.clone(),
            self.aux_columns.clone(),
        )
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<MaskedMatrix, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file)
}

pub fn read_csv<R: Read>(reader: R) -> Result<MaskedMatrix, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let (mut data_idx, mut aux_idx) = (Vec::new(), Vec::new());
    for (j, name) in header.iter().enumerate() {
        if name.starts_with(AUX_PREFIX) {
            aux_idx.push(j);
        } else {
            data_idx.push(j);
        }
    }
    let (mut values, mut mask, mut aux) = (Vec::new(), Vec::new(), Vec::new());
    let mut n = 0;
    for (rec_no, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec_no + 2;
        if rec.len() != header.len() {
            return Err(DataError::Ragged {
                line,
                expected: header.len(),
                found: rec.len(),
            });
        }
        let parse = |j: usize| -> Result<Option<f64>, DataError> {
            let cell = rec[j].trim();
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| DataError::NonNumeric {
                    line,
                    column: header[j].clone(),
                    cell: cell.to_string(),
                })
        };
        for &j in &data_idx {
            match parse(j)? {
                Some(v) => {
                    values.push(v);
                    mask.push(1.0);
                }
                None => {
                    values.push(0.0);
                    mask.push(0.0);
                }
            }
        }
        for &j in &aux_idx {
            match parse(j)? {
                Some(v) => aux.push(v),
                None => {
                    return Err(DataError::MissingAux {
                        line,
                        column: header[j].clone(),
                    })
                }
            }
        }
        n += 1;
    }
    let d = data_idx.len();
    let values = Tensor::new(n, d, values).map_err(|e| DataError::Shape(e.to_string()))?;
    let mask = Tensor::new(n, d, mask).map_err(|e| DataError::Shape(e.to_string()))?;
    let aux_t = if aux_idx.is_empty() {
        None
    } else {
        Some(Tensor::new(n, aux_idx.len(), aux).map_err(|e| DataError::Shape(e.to_string()))?)
    };
    MaskedMatrix::with_names(
        values,
        mask,
        aux_t,
        data_idx.iter().map(|&j| header[j].clone()).collect(),
        aux_idx.iter().map(|&j| header[j].clone()).collect(),
    )
}

pub fn save_csv(data: &MaskedMatrix, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_csv(data, file)
}

/// Writes data columns first, then `aux_` columns.
pub fn write_csv<W: Write>(data: &MaskedMatrix, writer: W) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let header: Vec<&str> = data
        .columns
        .iter()
        .chain(&data.aux_columns)
        .map(String::as_str)
        .collect();
    w.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut rec: Vec<String> = (0..data.n_cols())
            .map(|j| data.get(i, j).map(format_number).unwrap_or_default())
            .collect();
        if let Some(a) = &data.aux {
            rec.extend(a.row_slice(i).iter().map(|&v| format_number(v)));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitUnit {
    Row,
    ObservedEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: [f64; 3],
    pub seed: u64,
    pub unit: SplitUnit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: MaskedMatrix,
    pub val: MaskedMatrix,
    pub test: MaskedMatrix,
}

fn split_counts(total: usize, fractions: [f64; 3]) -> Result<[usize; 3], DataError> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions(fractions));
    }
    let val = (fractions[1] * total as f64).round() as usize;
    let test = (fractions[2] * total as f64).round() as usize;
    let train = total.saturating_sub(val + test);
    let counts = [train, val, test];
    for (k, name) in ["train", "val", "test"].into_iter().enumerate() {
        if fractions[k] > 0.0 && counts[k] == 0 {
            return Err(DataError::EmptySplit(name));
        }
    }
    Ok(counts)
}

/// Partitions rows, or observed entries, into train/val/test.
///
/// With [`SplitUnit::ObservedEntry`] all three parts keep every row; an entry
/// belongs to exactly one part and is masked out of the other two.
pub fn split(data: &MaskedMatrix, spec: &SplitSpec) -> Result<Split, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.unit {
        SplitUnit::Row => {
            let counts = split_counts(data.n_rows(), spec.fractions)?;
            let mut idx: Vec<usize> = (0..data.n_rows()).collect();
            idx.shuffle(&mut rng);
            let (a, rest) = idx.split_at(counts[0]);
            let (b, c) = rest.split_at(counts[1]);
            let sorted = |s: &[usize]| {
                let mut v = s.to_vec();
                v.sort_unstable();
                v
            };
            Ok(Split {
                train: data.select_rows(&sorted(a)),
                val: data.select_rows(&sorted(b)),
                test: data.select_rows(&sorted(c)),
            })
        }
        SplitUnit::ObservedEntry => {
            let mut entries: Vec<(usize, usize)> = (0..data.n_rows())
                .flat_map(|i| (0..data.n_cols()).map(move |j| (i, j)))
                .filter(|&(i, j)| data.is_observed(i, j))
                .collect();
            let counts = split_counts(entries.len(), spec.fractions)?;
            entries.shuffle(&mut rng);
            let (n, d) = (data.n_rows(), data.n_cols());
            let mut masks = [Tensor::zeros(n, d), Tensor::zeros(n, d), Tensor::zeros(n, d)];
            for (k, &(i, j)) in entries.iter().enumerate() {
                let part = if k < counts[0] {
                    0
                } else if k < counts[0] + counts[1] {
                    1
                } else {
                    2
                };
                masks[part].set(i, j, 1.0);
            }
            let [m0, m1, m2] = masks;
            Ok(Split {
                train: data.with_mask(m0)?,
                val: data.with_mask(m1)?,
                test: data.with_mask(m2)?,
            })
        }
    }
}

/// Per-column affine map `x ↦ (x − shift) / scale` and its inverse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnAffine {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ColumnAffine {
    pub fn identity(d: usize) -> Self {
        Self {
            shift: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn forward(&self, t: &Tensor) -> Tensor {
        Tensor::from_fn(t.rows(), t.cols(), |i, j| (t.get(i, j) - self.shift[j]) / self.scale[j])
    }

    pub fn inverse(&self, t: &Tensor) -> Tensor {
        Tensor::from_fn(t.rows(), t.cols(), |i, j| t.get(i, j) * self.scale[j] + self.shift[j])
    }

    pub fn apply(&self, data: &MaskedMatrix) -> Result<MaskedMatrix, DataError> {
        data.with_values(self.forward(data.values()))
    }

    pub fn revert(&self, data: &MaskedMatrix) -> Result<MaskedMatrix, DataError> {
        data.with_values(self.inverse(data.values()))
    }
}

/// Maps ratings in `[lo, hi]` onto `[0, 1]`.
pub fn rescale_ratings(
    data: &MaskedMatrix,
    lo: f64,
    hi: f64,
) -> Result<(MaskedMatrix, ColumnAffine), DataError> {
    for i in 0..data.n_rows() {
        for j in 0..data.n_cols() {
            if let Some(v) = data.get(i, j) {
                if v < lo || v > hi {
                    return Err(DataError::OutOfRange { value: v, lo, hi });
                }
            }
        }
    }
    let d = data.n_cols();
    let t = ColumnAffine {
        shift: vec![lo; d],
        scale: vec![hi - lo; d],
    };
    Ok((t.apply(data)?, t))
}

/// Mean/std standardization whose statistics come from observed entries only.
pub fn fit_standardizer(data: &MaskedMatrix) -> Result<ColumnAffine, DataError> {
    let d = data.n_cols();
    let mut t = ColumnAffine::identity(d);
    for j in 0..d {
        let obs: Vec<f64> = (0..data.n_rows()).filter_map(|i| data.get(i, j)).collect();
        if obs.is_empty() {
            return Err(DataError::EmptyColumn(j));
        }
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        let var = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / obs.len() as f64;
        if !(var > 1e-300) {
            return Err(DataError::ZeroVariance(j));
        }
        t.shift[j] = mean;
        t.scale[j] = var.sqrt();
    }
    Ok(t)
}

/// The auxiliary matrix `U` for the conditional prior.
pub fn assemble_aux(data: &MaskedMatrix, source: AuxSource) -> Result<Tensor, DataError> {
    match source {
        AuxSource::Metadata => data.aux().cloned().ok_or(DataError::NoMetadata),
        AuxSource::Mask => Ok(data.mask().clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MaskedMatrix {
        read_csv("a,b,c\n1,,3\n,5,6\n7,8,\n0.5,1,2\n".as_bytes()).unwrap()
    }

    #[test]
    fn load_format_contract() {
        let m = read_csv("a,b,aux_u\n1,,0.5\n".as_bytes()).unwrap();
        assert_eq!(m.values().data(), &[1.0, 0.0]);
        assert_eq!(m.mask().data(), &[1.0, 0.0]);
        assert_eq!(m.aux().unwrap().data(), &[0.5]);
        assert_eq!(m.columns(), &["a", "b"]);
        assert_eq!(m.aux_columns(), &["aux_u"]);

        let full = read_csv("a,b\n1,2\n3,4\n".as_bytes()).unwrap();
        assert!(full.mask().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            read_csv("a,b\n1,2\n3\n".as_bytes()),
            Err(DataError::Ragged { line: 3, .. })
        ));
        assert!(matches!(
            read_csv("a,aux_u\n1,\n".as_bytes()),
            Err(DataError::MissingAux { line: 2, .. })
        ));
        assert!(matches!(
            read_csv("a,b\n1,x\n".as_bytes()),
            Err(DataError::NonNumeric { .. })
        ));
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let text = "a,b,aux_u\n1,,0.5\n-2.25,3,1\n,,0\n0.1,1e-7,2\n";
        let m = read_csv(text.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_csv(&m, &mut out).unwrap();
        let first = String::from_utf8(out).unwrap();
        let again = read_csv(first.as_bytes()).unwrap();
        let mut out2 = Vec::new();
        write_csv(&again, &mut out2).unwrap();
        assert_eq!(first, String::from_utf8(out2).unwrap());
        assert_eq!(again, m);
        assert_eq!(first, "a,b,aux_u\n1,,0.5\n-2.25,3,1\n,,0\n0.1,0.0000001,2\n");
    }

    #[test]
    fn binary_columns_detected() {
        let m = read_csv("a,b\n1,0.5\n0,\n,2\n".as_bytes()).unwrap();
        assert_eq!(m.kinds(), &[ColumnKind::Binary, ColumnKind::Continuous]);
    }

    #[test]
    fn trivial_split_keeps_everything_in_train() {
        let m = sample();
        for unit in [SplitUnit::Row, SplitUnit::ObservedEntry] {
            let s = split(
                &m,
                &SplitSpec {
                    fractions: [1.0, 0.0, 0.0],
                    seed: 1,
                    unit,
                },
            )
            .unwrap();
            assert_eq!(s.train, m);
        }
    }

    #[test]
    fn entry_split_partitions_observed_entries() {
        let m = sample();
        let spec = SplitSpec {
            fractions: [0.5, 0.25, 0.25],
            seed: 7,
            unit: SplitUnit::ObservedEntry,
        };
        let s = split(&m, &spec).unwrap();
        let total = s.train.observed_count() + s.val.observed_count() + s.test.observed_count();
        assert_eq!(total, m.observed_count());
        for i in 0..m.n_rows() {
            for j in 0..m.n_cols() {
                let hits = [&s.train, &s.val, &s.test]
                    .iter()
                    .filter(|p| p.is_observed(i, j))
                    .count();
                assert_eq!(hits, usize::from(m.is_observed(i, j)));
            }
        }
        assert_eq!(split(&m, &spec).unwrap(), s);
    }

    #[test]
    fn split_rejects_bad_specs() {
        let m = sample();
        let bad = SplitSpec {
            fractions: [0.5, 0.6, -0.1],
            seed: 0,
            unit: SplitUnit::Row,
        };
        assert!(matches!(split(&m, &bad), Err(DataError::BadFractions(_))));
        let tiny = SplitSpec {
            fractions: [0.9, 0.05, 0.05],
            seed: 0,
            unit: SplitUnit::Row,
        };
        assert!(matches!(split(&m, &tiny), Err(DataError::EmptySplit(_))));
    }

    #[test]
    fn rescale_ratings_affine() {
        let m = read_csv("a,b\n1,5\n3,\n".as_bytes()).unwrap();
        let (s, t) = rescale_ratings(&m, 1.0, 5.0).unwrap();
        assert_eq!(s.values().data(), &[0.0, 1.0, 0.5, 0.0]);
        let back = t.revert(&s).unwrap();
        for (a, b) in back.values().data().iter().zip(m.values().data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            rescale_ratings(&m, 2.0, 5.0),
            Err(DataError::OutOfRange { .. })
        ));
    }

    #[test]
    fn standardizer_uses_observed_entries_only() {
        let m = sample();
        let t = fit_standardizer(&m).unwrap();
        let mut perturbed = m.values().clone();
        perturbed.set(0, 1, 1e6);
        let m2 = MaskedMatrix::new(perturbed, m.mask().clone(), None).unwrap();
        assert_eq!(fit_standardizer(&m2).unwrap(), t);
        let c = read_csv("a\n2\n2\n".as_bytes()).unwrap();
        assert!(matches!(fit_standardizer(&c), Err(DataError::ZeroVariance(0))));
    }

    #[test]
    fn assemble_aux_sources() {
        let m = read_csv("a,b,aux_u\n1,,0.5\n2,3,1.5\n".as_bytes()).unwrap();
        assert_eq!(
            assemble_aux(&m, AuxSource::Mask).unwrap().data(),
            &[1.0, 0.0, 1.0, 1.0]
        );
        assert_eq!(assemble_aux(&m, AuxSource::Metadata).unwrap().data(), &[0.5, 1.5]);
        assert!(matches!(
            assemble_aux(&sample(), AuxSource::Metadata),
            Err(DataError::NoMetadata)
        ));
    }
}
