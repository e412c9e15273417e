use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use localsvm::data::write_labeled_csv;
use localsvm::experiments::{load_model, ExperimentConfig};
use localsvm::Dataset;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_localsvm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn two_clusters(path: &Path) -> Dataset {
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for i in 0..60 {
        let t = i as f64 / 59.0;
        rows.push(vec![-3.0 + t, 0.5 * t]);
        ys.push(if i % 4 == 0 { -1.0 } else { 1.0 });
        rows.push(vec![3.0 + t, -0.5 * t]);
        ys.push(if i % 4 == 0 { 1.0 } else { -1.0 });
    }
    let data = Dataset::from_rows(&rows, &ys).unwrap();
    write_labeled_csv(fs::File::create(path).unwrap(), &data).unwrap();
    data
}

fn csv_config(dir: &Path, data: &Path) -> PathBuf {
    let cfg = format!(
        r#"{{
  "experiment_id": "clusters",
  "data": {{"csv": "{}"}},
  "regionalization": {{"method": "voronoi_overlap", "target_regions": 2, "overlap": 0.0, "min_points": 3, "seed": 1}},
  "kernel": {{"kind": "gaussian_rbf", "gamma": 0.8}},
  "loss": {{"kind": "hinge"}},
  "solver": {{"tol": 0.0001}},
  "seed": 5
}}"#,
        s(data)
    );
    let path = dir.join("config.json");
    fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn train_is_deterministic_and_counts_match() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("data.csv");
    two_clusters(&data_path);
    let cfg = csv_config(dir.path(), &data_path);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["train", "--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(
        fs::read(a.join("model.json")).unwrap(),
        fs::read(b.join("model.json")).unwrap()
    );

    let model = load_model(&a.join("model.json")).unwrap();
    assert_eq!(model.region_count(), 2);
    let config = ExperimentConfig::load(&cfg).unwrap();
    let outcome = localsvm::experiments::train(&config).unwrap();
    let all = config.load_data().unwrap();
    let d_n = all.subset(&outcome.train_indices);
    let mut recount = [0usize; 2];
    for x in d_n.points() {
        for r in model.regionalization().membership(x).unwrap() {
            recount[r] += 1;
        }
    }
    let report = fs::read_to_string(a.join("train_report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert!(lines[0].starts_with("region,n_b,lambda"));
    assert!(lines[0].ends_with("seed,config_hash"));
    for (r, line) in lines[1..].iter().enumerate() {
        let n_b: usize = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(n_b, recount[r]);
        assert!(line.ends_with(&config.hash()));
    }
}

#[test]
fn predict_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("data.csv");
    let data = two_clusters(&data_path);
    let cfg = csv_config(dir.path(), &data_path);
    assert!(run(&["train", "--config", s(&cfg), "--out", s(dir.path())])
        .status
        .success());
    let model_path = dir.path().join("model.json");
    let model = load_model(&model_path).unwrap();

    let o = run(&[
        "predict",
        "--model",
        s(&model_path),
        "--input",
        s(&data_path),
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("predictions.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,prediction"));
    let rows: Vec<Vec<f64>> = data.points().map(<[f64]>::to_vec).collect();
    let expected = model.predict_batch(&rows).unwrap();
    let got: Vec<f64> = lines
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(got, expected);

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "x1,x2\n").unwrap();
    let out = dir.path().join("empty_out");
    assert!(run(&[
        "predict",
        "--model",
        s(&model_path),
        "--input",
        s(&empty),
        "--out",
        s(&out)
    ])
    .status
    .success());
    assert_eq!(
        fs::read_to_string(out.join("predictions.csv")).unwrap(),
        "x1,x2,prediction\n"
    );

    let wrong = dir.path().join("wrong.csv");
    fs::write(&wrong, "x1\n0.5\n").unwrap();
    let o = run(&[
        "predict",
        "--model",
        s(&model_path),
        "--input",
        s(&wrong),
        "--out",
        s(dir.path()),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("dimension mismatch"));
}

#[test]
fn eval_reports_regions() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("data.csv");
    two_clusters(&data_path);
    let cfg = csv_config(dir.path(), &data_path);
    assert!(run(&["train", "--config", s(&cfg), "--out", s(dir.path())])
        .status
        .success());
    let o = run(&[
        "eval",
        "--config",
        s(&cfg),
        "--model",
        s(&dir.path().join("model.json")),
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    let scopes: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(scopes, ["all", "region_0", "region_1"]);
}

#[test]
fn malformed_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("data.csv");
    fs::write(&data_path, "x1,y\n0.1,1\n0.2,\n").unwrap();
    let cfg = csv_config(dir.path(), &data_path);
    let o = run(&["train", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");

    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"data": {"csv": "x.csv"}, "regionalization": {"method": "voronoi_overlap", "target_regions": 0},
           "kernel": {"kind": "gaussian_rbf", "gamma": 1.0}, "loss": {"kind": "hinge"},
           "lambda_schedule": {"c": 1.0, "p": 0.7}, "region_fraction": 0.0}"#,
    )
    .unwrap();
    let o = run(&["train", "--config", s(&bad)]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    for field in ["lambda_schedule.p", "region_fraction", "target_regions"] {
        assert!(err.contains(field), "{err}");
    }
}

fn small_consistency(dir: &Path, noise: &str, shifted: bool) -> PathBuf {
    let cfg = format!(
        r#"{{
  "data": {{"generator": {{"kind": "piecewise_median_regression", "noise": "{noise}", "scale": 0.1}}}},
  "regionalization": {{"method": "voronoi_overlap", "target_regions": 2, "min_points": 5}},
  "kernel": {{"kind": "gaussian_rbf", "gamma": 0.15}},
  "loss": {{"kind": "pinball", "params": {{"tau": 0.5}}}},
  "solver": {{"tol": 0.001}},
  "sample_sizes": [50, 100],
  "repetitions": 2,
  "mc_samples": 10000,
  "shifted": {shifted}
}}"#
    );
    let path = dir.join(format!("{noise}.json"));
    fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn consistency_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_consistency(dir.path(), "gaussian", true);
    let o = run(&[
        "consistency",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--seed",
        "4",
        "--jobs",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("consistency.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "experiment_id,n,repetition,lambda,lambda_regions,region_count,risk,bayes,excess,stderr,seed,config_hash"
    );
    assert_eq!(lines.len(), 1 + 4 + 2);
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        let n: f64 = f[1].parse().unwrap();
        let lambda: f64 = f[3].parse().unwrap();
        assert_eq!(lambda, n.powf(-0.25));
    }
    assert!(lines[5].contains(",median,"));

    let cauchy = small_consistency(dir.path(), "cauchy", false);
    let o = run(&[
        "consistency",
        "--config",
        s(&cauchy),
        "--out",
        s(dir.path()),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("cauchy"));
}

#[test]
fn robustness_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs_dir().join("robustness.json"))
        .unwrap()
        .replace("\"trials\": 100", "\"trials\": 5");
    let cfg = dir.path().join("r.json");
    fs::write(&cfg, text).unwrap();
    let o = run(&[
        "robustness",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--strict",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(dir.path().join("robustness.csv")).unwrap();
    assert!(report.starts_with("trial,loss,B,epsilons,lambdas,bound,empirical,slack,pass"));
    assert_eq!(report.lines().count(), 6);
    assert!(report.lines().skip(1).all(|l| l.contains(",true,")));
}

#[test]
fn shipped_configs_parse() {
    let mut count = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 4);
}
