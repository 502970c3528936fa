use std::path::Path;

use gina_core::active::{run_acquisition, AcquisitionConfig};
use gina_core::autodiff::Tensor;
use gina_core::dataio::{load_csv, rescale_ratings, save_csv, ColumnAffine, ColumnKind, MaskedMatrix};
use gina_core::evalsuite::{debiased_mse, level_change_test, mse, probe_samples};
use gina_core::models::{load_model, model_aux, save_model, train, TrainedModel};
use gina_core::synthdata::{generate_pair, SynthSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{require, RunConfig};
use crate::error::CliError;
use crate::output::{prepare, write_json, write_jsonl, write_trace};

pub const THREADS_ENV: &str = "GINA_NUM_THREADS";

fn load_data(path: &Path) -> Result<MaskedMatrix, CliError> {
    load_csv(path).map_err(|e| CliError::from(e).context(path.display()))
}

fn load_trained(path: &Path) -> Result<TrainedModel, CliError> {
    load_model(path).map_err(|e| CliError::from(e).context(path.display()))
}

/// Applies the configured rating rescale, returning the transform to undo it.
fn scaled(config: &RunConfig, data: MaskedMatrix) -> Result<(MaskedMatrix, Option<ColumnAffine>), CliError> {
    match config.data.rating_range {
        Some([lo, hi]) if hi > lo => {
            let (d, t) = rescale_ratings(&data, lo, hi)?;
            Ok((d, Some(t)))
        }
        Some(r) => Err(CliError::config(format!("rating_range {r:?} must be increasing"))),
        None => Ok((data, None)),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::config(format!("{THREADS_ENV}={v} is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::config(e.to_string()))
}

pub fn generate(config: &RunConfig) -> Result<(), CliError> {
    if config.data.n == 0 {
        return Err(CliError::config("n must be positive"));
    }
    if config.data.n_test == 0 {
        return Err(CliError::config("n_test must be positive"));
    }
    let out = prepare(config, "generate")?;
    let mut spec = SynthSpec::new(config.data.dataset, config.data.n, config.seed);
    spec.noise_var = config.data.noise_var;
    let (train_set, test_set) = generate_pair(&spec, config.data.n_test)?;
    save_csv(&train_set.masked()?, out.join("train.csv"))?;
    save_csv(&train_set.complete()?, out.join("train_complete.csv"))?;
    save_csv(&test_set.complete()?, out.join("test_complete.csv"))?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        train: &'a gina_core::synthdata::GeneratorRecord,
        test: &'a gina_core::synthdata::GeneratorRecord,
        observed_fraction: [f64; 3],
    }
    let sidecar = Sidecar {
        train: &train_set.record,
        test: &test_set.record,
        observed_fraction: [0, 1, 2].map(|j| train_set.observed_fraction(j)),
    };
    write_json(&out.join("generator.json"), &sidecar)
}

pub fn train_models(config: &RunConfig) -> Result<(), CliError> {
    let path = require(&config.data.path, "data path (--data)")?;
    let (data, _) = scaled(config, load_data(path)?)?;
    let all_binary = data.kinds().iter().all(|k| *k == ColumnKind::Binary);
    let spec = config.model_spec(data.n_cols(), data.aux_columns().len(), all_binary)?;
    let out = prepare(config, "train")?;
    let seeds = config.all_seeds();
    let results: Vec<Result<TrainedModel, CliError>> = thread_pool()?.install(|| {
        seeds
            .par_iter()
            .map(|&s| train(&data, &spec, &config.train_config(s)).map_err(|e| CliError::from(e).context(format!("seed {s}"))))
            .collect()
    });
    let mut reports = Vec::new();
    for (seed, result) in seeds.iter().zip(results) {
        let trained = result?;
        let suffix = if seeds.len() == 1 {
            String::new()
        } else {
            format!("_seed{seed}")
        };
        save_model(&trained, out.join(format!("model{suffix}.json")))?;
        write_trace(&out.join(format!("trace{suffix}.csv")), &trained.trace)?;
        reports.push(gina_core::evalsuite::MetricReport::single(
            format!("final_bound{suffix}"),
            trained.trace.last().copied().unwrap_or(f64::NAN),
        ));
    }
    write_jsonl(&out.join("reports.jsonl"), &reports)
}

pub fn impute(config: &RunConfig) -> Result<(), CliError> {
    let model = load_trained(require(&config.model.path, "model path (--model)")?)?;
    let original = load_data(require(&config.data.path, "data path (--data)")?)?;
    let (data, transform) = scaled(config, original.clone())?;
    let out = prepare(config, "impute")?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (point, samples) = model.impute_matrix(data.values(), data.mask(), config.impute.samples, &mut rng)?;
    let finish = |t: &Tensor| -> Result<MaskedMatrix, CliError> {
        let mut v = match &transform {
            Some(tr) => tr.inverse(t),
            None => t.clone(),
        };
        for i in 0..original.n_rows() {
            for j in 0..original.n_cols() {
                if let Some(x) = original.get(i, j) {
                    v.set(i, j, x);
                }
            }
        }
        Ok(MaskedMatrix::with_names(
            v,
            Tensor::filled(original.n_rows(), original.n_cols(), 1.0),
            original.aux().cloned(),
            original.columns().to_vec(),
            original.aux_columns().to_vec(),
        )?)
    };
    save_csv(&finish(&point)?, out.join("imputed.csv"))?;
    for (s, t) in samples.iter().take(config.impute.emit_samples).enumerate() {
        save_csv(&finish(t)?, out.join(format!("imputed_sample_{s}.csv")))?;
    }
    Ok(())
}

pub fn evaluate(config: &RunConfig) -> Result<(), CliError> {
    let pred = load_data(require(&config.evaluate.pred, "predictions (--pred)")?)?;
    let truth = load_data(require(&config.evaluate.truth, "ground truth (--truth)")?)?;
    let exclude = config.evaluate.exclude.as_deref().map(load_data).transpose()?;
    if pred.values().shape() != truth.values().shape() {
        return Err(CliError::data(format!(
            "predictions are {:?} but truth is {:?}",
            pred.values().shape(),
            truth.values().shape()
        )));
    }
    let mut scored = truth.mask().zip_map(pred.mask(), |a, b| a * b);
    if let Some(ex) = &exclude {
        if ex.mask().shape() != scored.shape() {
            return Err(CliError::data("exclusion file shape differs from truth"));
        }
        scored = scored.zip_map(ex.mask(), |s, e| s * (1.0 - e));
    }
    let out = prepare(config, "evaluate")?;
    let reports = vec![
        mse(pred.values(), truth.values(), &scored, None)?,
        debiased_mse(pred.values(), truth.values(), &scored, None)?,
    ];
    write_jsonl(&out.join("reports.jsonl"), &reports)
}

pub fn probe(config: &RunConfig) -> Result<(), CliError> {
    let truth = load_data(require(&config.probe.truth, "complete data (--truth)")?)?;
    if config.probe.models.is_empty() {
        return Err(CliError::config("probe needs at least one --model"));
    }
    if let Some(&c) = config.probe.columns.iter().find(|&&c| c >= truth.n_cols()) {
        return Err(CliError::config(format!("probe column {c} out of range")));
    }
    let out = prepare(config, "probe")?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::new();
    for path in &config.probe.models {
        let model = load_trained(path)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let name = format!("{}:{stem}", model.spec().kind.name());
        let aux = model_aux(&truth, model.spec())?
            .unwrap_or_else(|| Tensor::zeros(truth.n_rows(), 1));
        let generated = model.generate_for_aux(&aux, &mut rng)?;
        let as_matrix = MaskedMatrix::with_names(
            generated.clone(),
            Tensor::filled(generated.rows(), generated.cols(), 1.0),
            None,
            truth.columns().to_vec(),
            Vec::new(),
        )?;
        save_csv(&as_matrix, out.join(format!("samples_{}.csv", name.replace(':', "_"))))?;
        samples.push((name, generated));
    }
    let ranking = probe_samples(&samples, truth.values(), &config.probe.columns, config.probe.bootstrap, &mut rng)?;
    write_jsonl(&out.join("reports.jsonl"), &ranking)
}

#[derive(Serialize)]
struct HistoryLine {
    row: usize,
    step: usize,
    index: usize,
    reward: f64,
    value: f64,
    level_delta: Option<f64>,
}

pub fn active(config: &RunConfig) -> Result<(), CliError> {
    let model = load_trained(require(&config.model.path, "model path (--model)")?)?;
    let (data, _) = scaled(config, load_data(require(&config.data.path, "data path (--data)")?)?)?;
    let levels = match &config.active.levels {
        Some(p) => {
            let l = load_data(p)?;
            if l.n_rows() != 1 || l.observed_count() != l.n_cols() {
                return Err(CliError::data(format!("{}: levels need one complete row", p.display())));
            }
            Some(l.values().row_slice(0).to_vec())
        }
        None => None,
    };
    let out = prepare(config, "active")?;
    let acq = AcquisitionConfig {
        steps: config.active.steps,
        n_outer: config.active.n_outer,
        n_target: config.active.n_target,
        seed: config.seed,
    };
    let run = run_acquisition(&model.model, &data, &acq, levels.as_deref())?;
    let mut lines = Vec::new();
    for (row, history) in run.rows.iter().enumerate() {
        for (k, s) in history.iter().enumerate() {
            let level_delta = match (&levels, k) {
                (Some(l), k) if k > 0 => Some(l[s.index] - l[history[k - 1].index]),
                _ => None,
            };
            lines.push(HistoryLine {
                row,
                step: s.step,
                index: s.index,
                reward: s.reward,
                value: s.value,
                level_delta,
            });
        }
    }
    write_jsonl(&out.join("history.jsonl"), &lines)?;
    if let Some(changes) = &run.level_changes {
        let test = level_change_test(&changes.after_correct, &changes.after_incorrect)?;
        write_jsonl(&out.join("reports.jsonl"), &[test])?;
    }
    Ok(())
}
