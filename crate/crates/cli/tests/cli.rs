use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gina(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gina"))
        .args(args)
        .env("GINA_NUM_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = gina(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn jsonl(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn generate_writes_files_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["generate", "--dataset", "A", "--n", "2000", "--seed", "1", "--out", p(out)]);
    }
    for f in ["train.csv", "train_complete.csv", "test_complete.csv", "generator.json", "run.json", "effective_config.toml"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    let rows = csv_rows(&a.join("train.csv"));
    assert_eq!(rows[0], ["x1", "x2", "x3", "aux_x1"]);
    assert_eq!(rows.len(), 2001);
    assert!(rows[1..].iter().all(|r| !r[0].is_empty()));
    assert!(rows[1..].iter().any(|r| r[1].is_empty()));
    for f in ["train.csv", "train_complete.csv", "test_complete.csv", "generator.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(run["command"], "generate");
    assert_eq!(run["config"]["seed"], 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(gina(&["generate", "--n", "0", "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(gina(&["train", "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(gina(&["bogus"]).status.code(), Some(2));
    let missing = dir.path().join("nope.csv");
    assert_eq!(gina(&["train", "--data", p(&missing), "--out", p(&out)]).status.code(), Some(3));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "unknown_key = 1\n").unwrap();
    assert_eq!(gina(&["generate", "--config", p(&bad), "--out", p(&out)]).status.code(), Some(2));

    let huge = dir.path().join("huge.csv");
    fs::write(&huge, "x1,x2,x3,aux_x1\n1e300,2e300,1e300,1\n-1e300,1e300,,0\n").unwrap();
    let code = gina(&["train", "--data", p(&huge), "--epochs", "1", "--out", p(&out)]).status.code();
    assert_eq!(code, Some(4));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("gen");
    fs::write(&cfg, "seed = 5\n[data]\ndataset = \"C\"\nn = 50\nn_test = 20\n").unwrap();
    ok(&["generate", "--config", p(&cfg), "--n", "30", "--out", p(&out)]);
    assert_eq!(csv_rows(&out.join("train.csv")).len(), 31);
    assert_eq!(csv_rows(&out.join("test_complete.csv")).len(), 21);
    let echoed = fs::read_to_string(out.join("effective_config.toml")).unwrap();
    assert!(echoed.contains("seed = 5") && echoed.contains("n = 30") && echoed.contains("dataset = \"C\""));
    let again = dir.path().join("again");
    ok(&["generate", "--config", p(&out.join("effective_config.toml")), "--out", p(&again)]);
    assert_eq!(fs::read(out.join("train.csv")).unwrap(), fs::read(again.join("train.csv")).unwrap());
}

#[test]
fn train_impute_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    ok(&["generate", "--dataset", "A", "--n", "200", "--n-test", "100", "--seed", "3", "--out", p(&gen)]);
    let train_dir = dir.path().join("train");
    let data = gen.join("train.csv");
    ok(&["train", "--data", p(&data), "--model-kind", "gina", "--epochs", "3", "--seeds", "1,2", "--out", p(&train_dir)]);
    for f in ["model_seed1.json", "model_seed2.json", "trace_seed1.csv", "reports.jsonl"] {
        assert!(train_dir.join(f).exists(), "{f} missing");
    }
    assert_eq!(csv_rows(&train_dir.join("trace_seed1.csv")).len(), 4);

    let single = dir.path().join("single");
    ok(&["train", "--data", p(&data), "--epochs", "3", "--seed", "1", "--out", p(&single)]);
    assert_eq!(
        fs::read(single.join("model.json")).unwrap(),
        fs::read(train_dir.join("model_seed1.json")).unwrap()
    );

    let imp = dir.path().join("imp");
    let model = train_dir.join("model_seed1.json");
    ok(&["impute", "--model", p(&model), "--data", p(&data), "--emit-samples", "2", "--out", p(&imp)]);
    let input = csv_rows(&data);
    let output = csv_rows(&imp.join("imputed.csv"));
    assert_eq!(input[0], output[0]);
    for (a, b) in input.iter().zip(&output).skip(1) {
        for (x, y) in a.iter().zip(b) {
            assert!(!y.is_empty());
            if !x.is_empty() {
                assert_eq!(x, y);
            }
        }
    }
    assert!(imp.join("imputed_sample_1.csv").exists());

    let ev = dir.path().join("ev");
    ok(&["evaluate", "--pred", p(&imp.join("imputed.csv")), "--truth", p(&gen.join("train_complete.csv")), "--exclude", p(&data), "--out", p(&ev)]);
    let reports = jsonl(&ev.join("reports.jsonl"));
    assert_eq!(reports[0]["name"], "mse");
    assert!(reports[0]["value"].as_f64().unwrap() > 0.0);

    let zero = dir.path().join("zero");
    let truth = gen.join("train_complete.csv");
    ok(&["evaluate", "--pred", p(&truth), "--truth", p(&truth), "--out", p(&zero)]);
    let reports = jsonl(&zero.join("reports.jsonl"));
    assert_eq!(reports[0]["value"], 0.0);
    assert_eq!(reports[1]["value"], 0.0);
}

#[test]
fn probe_ranks_models() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    ok(&["generate", "--dataset", "C", "--n", "300", "--n-test", "300", "--seed", "2", "--out", p(&gen)]);
    let data = gen.join("train.csv");
    for kind in ["gina", "pvae"] {
        let out = dir.path().join(kind);
        ok(&["train", "--data", p(&data), "--model-kind", kind, "--epochs", "2", "--out", p(&out)]);
    }
    let pr = dir.path().join("probe");
    let (g, v) = (dir.path().join("gina/model.json"), dir.path().join("pvae/model.json"));
    ok(&["probe", "--truth", p(&gen.join("test_complete.csv")), "--model", p(&g), "--model", p(&v), "--out", p(&pr)]);
    let ranking = jsonl(&pr.join("reports.jsonl"));
    assert_eq!(ranking.len(), 2);
    assert!(ranking[0]["value"].as_f64().unwrap() <= ranking[1]["value"].as_f64().unwrap());
    assert!(pr.join("samples_gina_model.csv").exists());
}

#[test]
fn active_emits_history_and_level_test() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("resp.csv");
    let mut text = String::from("q1,q2,q3,q4\n");
    for i in 0..40 {
        let bits: Vec<String> = (0..4).map(|j| if (i * 7 + j * 3) % 5 < 3 { "1" } else { "0" }.to_string()).collect();
        text += &(bits.join(",") + "\n");
    }
    fs::write(&data, text).unwrap();
    let levels = dir.path().join("levels.csv");
    fs::write(&levels, "q1,q2,q3,q4\n1,2,3,4\n").unwrap();
    let model_dir = dir.path().join("m");
    ok(&["train", "--data", p(&data), "--model-kind", "pvae", "--epochs", "2", "--out", p(&model_dir)]);
    let spec: serde_json::Value = serde_json::from_str(&fs::read_to_string(model_dir.join("model.json")).unwrap()).unwrap();
    assert_eq!(spec["spec"]["likelihood"]["type"], "bernoulli");
    let act = dir.path().join("act");
    ok(&["active", "--model", p(&model_dir.join("model.json")), "--data", p(&data), "--levels", p(&levels), "--steps", "3", "--out", p(&act)]);
    let history = jsonl(&act.join("history.jsonl"));
    assert_eq!(history.len(), 40 * 3);
    assert!(history[0]["level_delta"].is_null());
    assert!(history[1]["level_delta"].is_number());
    let test = jsonl(&act.join("reports.jsonl"));
    let pv = test[0]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&pv));
    let code = gina(&["active", "--model", p(&model_dir.join("model.json")), "--data", p(&data), "--steps", "9", "--out", p(&act)]).status.code();
    assert_eq!(code, Some(2));
}
