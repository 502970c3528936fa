use gina_core::active::{run_acquisition, AcquisitionConfig};
use gina_core::autodiff::{sigmoid, Tensor};
use gina_core::dataio::MaskedMatrix;
use gina_core::evalsuite::level_change_test;
use gina_core::models::{train, ModelKind, ModelSpec, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const ITEMS: usize = 12;

fn difficulties() -> Vec<f64> {
    (0..ITEMS).map(|j| -2.0 + 4.0 * j as f64 / (ITEMS - 1) as f64).collect()
}

/// One-parameter logistic responses: `P(correct) = σ(2(θ − b_j))`.
fn responses(n: usize, seed: u64) -> MaskedMatrix {
    let b = difficulties();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Tensor::zeros(n, ITEMS);
    for i in 0..n {
        let theta: f64 = rng.sample(StandardNormal);
        for (j, bj) in b.iter().enumerate() {
            let p = sigmoid(2.0 * (theta - bj));
            x.set(i, j, if rng.gen::<f64>() < p { 1.0 } else { 0.0 });
        }
    }
    MaskedMatrix::new(x, Tensor::filled(n, ITEMS, 1.0), None).unwrap()
}

#[test]
fn planted_difficulty_ordering_is_recovered() {
    let mut spec = ModelSpec::binary(ModelKind::Pvae, ITEMS, 0);
    spec.latent_dim = 4;
    spec.decoder_widths = vec![16];
    spec.encoder = gina_core::models::EncoderSpec::PointNet {
        feature_dim: 16,
        id_dim: 4,
        widths: vec![],
    };
    let config = TrainConfig {
        lr: 0.01,
        batch_size: 100,
        epochs: 150,
        seed: 3,
    };
    let trained = train(&responses(800, 1), &spec, &config).unwrap();

    let test = responses(40, 2);
    let acq = AcquisitionConfig {
        steps: 5,
        n_outer: 10,
        n_target: 10,
        seed: 9,
    };
    let run = run_acquisition(&trained.model, &test, &acq, Some(&difficulties())).unwrap();
    assert_eq!(run.rows.len(), 40);
    let changes = run.level_changes.unwrap();
    assert_eq!(changes.after_correct.len() + changes.after_incorrect.len(), 40 * 4);
    let verdict = level_change_test(&changes.after_correct, &changes.after_incorrect).unwrap();
    assert!(
        verdict.mean_after_correct > verdict.mean_after_incorrect && verdict.p_value < 0.05,
        "{verdict:?}"
    );
}
