use gina_core::autodiff::{glorot_uniform, AdamState, Tape, Tensor, Var};
use proptest::prelude::{prop, prop_assert, proptest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Graph = dyn Fn(&mut Tape, &[Var]) -> Var;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.5..1.5))
}

/// Contracts `y` against a fixed pseudo-random tensor so every output
/// entry gets a distinct cotangent.
fn project(tape: &mut Tape, y: Var) -> Var {
    let (r, c) = tape.shape(y);
    let w = tape.constant(Tensor::from_fn(r, c, |i, j| (1.0 + 1.3 * i as f64 + 0.7 * j as f64).sin()));
    let p = tape.mul(y, w).unwrap();
    tape.sum(p)
}

fn evaluate(inputs: &[Tensor], f: &Graph) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let y = f(&mut tape, &vars);
    let out = project(&mut tape, y);
    tape.value(out).item()
}

fn max_rel_error(inputs: &[Tensor], f: &Graph) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let y = f(&mut tape, &vars);
    let out = project(&mut tape, y);
    let grads = tape.backward(out).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, var) in vars.iter().enumerate() {
        let g = grads.get(*var);
        for idx in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[idx] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[idx] -= h;
            let fd = (evaluate(&plus, f) - evaluate(&minus, f)) / (2.0 * h);
            let a = g.data()[idx];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
        }
    }
    worst
}

#[test]
fn every_op_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let m = random(3, 4, &mut rng);
    let n = random(4, 2, &mut rng);
    let m2 = random(3, 4, &mut rng);
    let row = random(1, 4, &mut rng);
    let col = random(3, 1, &mut rng);
    let positive = m.map(|v| v.abs() + 0.5);

    let cases: Vec<(&str, Vec<Tensor>, Box<Graph>)> = vec![
        ("matmul", vec![m.clone(), n.clone()], Box::new(|t, v| t.matmul(v[0], v[1]).unwrap())),
        ("add", vec![m.clone(), m2.clone()], Box::new(|t, v| t.add(v[0], v[1]).unwrap())),
        ("add row", vec![m.clone(), row.clone()], Box::new(|t, v| t.add(v[0], v[1]).unwrap())),
        ("sub col", vec![m.clone(), col.clone()], Box::new(|t, v| t.sub(v[0], v[1]).unwrap())),
        ("sub col lhs", vec![col.clone(), m.clone()], Box::new(|t, v| t.sub(v[0], v[1]).unwrap())),
        ("mul", vec![m.clone(), m2.clone()], Box::new(|t, v| t.mul(v[0], v[1]).unwrap())),
        ("mul row", vec![row.clone(), m.clone()], Box::new(|t, v| t.mul(v[0], v[1]).unwrap())),
        ("scale", vec![m.clone()], Box::new(|t, v| t.scale(v[0], -2.5))),
        ("shift", vec![m.clone()], Box::new(|t, v| t.shift(v[0], 0.7))),
        ("tanh", vec![m.clone()], Box::new(|t, v| t.tanh(v[0]))),
        ("relu", vec![m.clone()], Box::new(|t, v| t.relu(v[0]))),
        ("sigmoid", vec![m.clone()], Box::new(|t, v| t.sigmoid(v[0]))),
        ("log", vec![positive.clone()], Box::new(|t, v| t.log(v[0]).unwrap())),
        ("exp", vec![m.clone()], Box::new(|t, v| t.exp(v[0]))),
        ("square", vec![m.clone()], Box::new(|t, v| t.square(v[0]))),
        ("clamp", vec![m.clone()], Box::new(|t, v| t.clamp(v[0], -0.9, 0.8))),
        ("sum", vec![m.clone()], Box::new(|t, v| t.sum(v[0]))),
        ("mean", vec![m.clone()], Box::new(|t, v| t.mean(v[0]))),
        ("sum_cols", vec![m.clone()], Box::new(|t, v| t.sum_cols(v[0]))),
        (
            "concat_cols",
            vec![m.clone(), col.clone()],
            Box::new(|t, v| t.concat_cols(&[v[0], v[1], v[0]]).unwrap()),
        ),
        ("slice_cols", vec![m.clone()], Box::new(|t, v| t.slice_cols(v[0], 1, 3).unwrap())),
        ("slice_rows", vec![m.clone()], Box::new(|t, v| t.slice_rows(v[0], 1, 3).unwrap())),
        ("repeat_rows", vec![m.clone()], Box::new(|t, v| t.repeat_rows(v[0], 3))),
        ("reshape", vec![m.clone()], Box::new(|t, v| t.reshape(v[0], 6, 2).unwrap())),
        ("logsumexp_rows", vec![m.clone()], Box::new(|t, v| t.logsumexp_rows(v[0]))),
    ];
    for (name, inputs, f) in &cases {
        let err = max_rel_error(inputs, f.as_ref());
        assert!(err < 1e-6, "{name}: relative error {err:e}");
    }
}

#[test]
fn three_layer_mlp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(7, 4, &mut rng);
    let inputs = vec![
        glorot_uniform(4, 6, &mut rng),
        random(1, 6, &mut rng),
        glorot_uniform(6, 5, &mut rng),
        random(1, 5, &mut rng),
        glorot_uniform(5, 3, &mut rng),
        random(1, 3, &mut rng),
    ];
    let f = move |t: &mut Tape, v: &[Var]| {
        let xv = t.constant(x.clone());
        let a = t.matmul(xv, v[0]).unwrap();
        let a = t.add(a, v[1]).unwrap();
        let h = t.tanh(a);
        let b = t.matmul(h, v[2]).unwrap();
        let b = t.add(b, v[3]).unwrap();
        let h = t.sigmoid(b);
        let c = t.matmul(h, v[4]).unwrap();
        let c = t.add(c, v[5]).unwrap();
        let l = t.logsumexp_rows(c);
        t.mean(l)
    };
    let err = max_rel_error(&inputs, &f);
    assert!(err < 1e-6, "relative error {err:e}");
}

#[test]
fn adam_minimizes_a_quadratic() {
    let target = Tensor::row(&[1.0, -2.0, 0.5]);
    let mut params = vec![Tensor::zeros(1, 3)];
    let mut adam = AdamState::new(&params, 0.05);
    for _ in 0..2000 {
        let mut tape = Tape::new();
        let p = tape.param(params[0].clone());
        let t = tape.constant(target.clone());
        let d = tape.sub(p, t).unwrap();
        let sq = tape.square(d);
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap().get(p);
        adam.step(&mut params, &[g]).unwrap();
    }
    for (a, b) in params[0].data().iter().zip(target.data()) {
        assert!((a - b).abs() < 1e-3);
    }
}

proptest! {
    #[test]
    fn broadcast_gradient_sums_over_repeated_axis(rows in 1usize..6, cols in 1usize..6, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random(rows, cols, &mut rng);
        let b = random(1, cols, &mut rng);
        let mut tape = Tape::new();
        let mv = tape.constant(m.clone());
        let bv = tape.param(b);
        let s = tape.mul(mv, bv).unwrap();
        let loss = tape.sum(s);
        let g = tape.backward(loss).unwrap().get(bv);
        for j in 0..cols {
            let want: f64 = (0..rows).map(|i| m.get(i, j)).sum();
            prop_assert!((g.get(0, j) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn logsumexp_rows_is_shift_equivariant(vals in prop::collection::vec(-50.0f64..50.0, 1..8), c in -100.0f64..100.0) {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::row(&vals));
        let shifted = tape.shift(a, c);
        let l0 = tape.logsumexp_rows(a);
        let l1 = tape.logsumexp_rows(shifted);
        let (v0, v1) = (tape.value(l0).item(), tape.value(l1).item());
        prop_assert!((v1 - v0 - c).abs() < 1e-9 * (1.0 + v0.abs() + c.abs()));
    }
}
