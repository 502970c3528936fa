#![allow(dead_code)]

use gina_core::autodiff::Tensor;
use gina_core::dataio::MaskedMatrix;
use gina_core::models::{
    make_batch, model_aux, Batch, BoundNoise, EncoderSpec, Likelihood, Model, ModelKind, ModelSpec,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Gradients smaller than this are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-4;

/// A 6×3 matrix with a few missing entries and one auxiliary column.
pub fn toy_matrix() -> MaskedMatrix {
    let x = Tensor::from_rows(&[
        vec![0.3, -1.2, 0.8],
        vec![1.1, 0.0, -0.4],
        vec![-0.7, 0.9, 0.0],
        vec![0.2, 0.4, 1.5],
        vec![-1.4, 0.0, 0.0],
        vec![0.9, -0.3, 0.6],
    ])
    .unwrap();
    let r = Tensor::from_rows(&[
        vec![1.0, 1.0, 1.0],
        vec![1.0, 0.0, 1.0],
        vec![1.0, 1.0, 0.0],
        vec![1.0, 1.0, 1.0],
        vec![1.0, 0.0, 0.0],
        vec![1.0, 1.0, 1.0],
    ])
    .unwrap();
    let u = Tensor::column(&[0.3, 1.1, -0.7, 0.2, -1.4, 0.9]);
    MaskedMatrix::new(x, r, Some(u)).unwrap()
}

pub fn full_batch(data: &MaskedMatrix, spec: &ModelSpec) -> Batch {
    let aux = model_aux(data, spec).unwrap();
    let idx: Vec<usize> = (0..data.n_rows()).collect();
    make_batch(data, aux.as_ref(), &idx)
}

pub fn init_model(spec: ModelSpec, seed: u64) -> Model {
    Model::init(spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

pub struct GradCheck {
    pub max_rel: f64,
    pub worst: String,
    pub checked: usize,
}

/// Compares the analytic gradient of the mean bound with central finite
/// differences of step `h`, reusing the same noise for every evaluation.
pub fn grad_check(model: &Model, batch: &Batch, noise: &BoundNoise, h: f64) -> GradCheck {
    let (_, grads) = model.objective_and_gradients(batch, noise).unwrap();
    let mean_bound = |m: &Model| {
        let v = m.bound_with_noise(batch, noise).unwrap();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let mut probe = model.clone();
    let mut out = GradCheck {
        max_rel: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for p in 0..model.params().len() {
        for e in 0..model.params().tensors()[p].len() {
            let orig = model.params().tensors()[p].data()[e];
            probe.params_mut().tensors_mut()[p].data_mut()[e] = orig + h;
            let up = mean_bound(&probe);
            probe.params_mut().tensors_mut()[p].data_mut()[e] = orig - h;
            let down = mean_bound(&probe);
            probe.params_mut().tensors_mut()[p].data_mut()[e] = orig;
            let fd = (up - down) / (2.0 * h);
            let g = grads[p].data()[e];
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(FD_FLOOR);
            out.checked += 1;
            if rel > out.max_rel {
                out.max_rel = rel;
                out.worst = format!("{}[{e}]: analytic {g:e}, numeric {fd:e}", model.params().names()[p]);
            }
        }
    }
    out
}

/// `x = w·z + b + ε`, `z ~ N(0, 1)`, `ε ~ N(0, σ²)`, as a PVAE with linear
/// encoder and decoder. The encoder is set to the exact posterior for a
/// fully observed row.
pub fn conjugate_1d(w: f64, b: f64, sigma: f64, k: usize) -> Model {
    let mut spec = ModelSpec::synthetic(ModelKind::Pvae, 1, 0);
    spec.latent_dim = 1;
    spec.decoder_widths = vec![];
    spec.encoder = EncoderSpec::ZeroImpute { widths: vec![] };
    spec.likelihood = Likelihood::Gaussian {
        log_sigma: sigma.ln(),
    };
    spec.k = k;
    let mut m = init_model(spec, 0);
    let s2 = sigma * sigma;
    let total = w * w + s2;
    let set = |m: &mut Model, name: &str, vals: &[f64]| {
        m.params_mut()
            .get_mut(name)
            .unwrap()
            .data_mut()
            .copy_from_slice(vals)
    };
    set(&mut m, "decoder.0.w", &[w]);
    set(&mut m, "decoder.0.b", &[b]);
    // encoder input is [x·r, r]; outputs are [mean, log_var]
    set(&mut m, "encoder.0.w", &[w / total, 0.0, -b * w / total, 0.0]);
    set(&mut m, "encoder.0.b", &[0.0, (s2 / total).ln()]);
    m
}

/// `ln N(x; b, w² + σ²)`.
pub fn conjugate_1d_log_marginal(x: f64, w: f64, b: f64, sigma: f64) -> f64 {
    let var = w * w + sigma * sigma;
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - b).powi(2) / (2.0 * var)
}
