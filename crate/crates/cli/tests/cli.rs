use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbfimpute"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const FAST_RBF: &str = r#"{"k_per_stage": 8, "max_stages": 2, "epochs_per_stage": 100}"#;
const FAST_MIRNN: &str = r#"{"hidden_size": 6, "window_len": 20, "epochs": 3}"#;

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data.csv");
    let pair = d.join("pair");
    ok(&[
        "synth",
        "lorenz96",
        "--n",
        "80",
        "--d",
        "4",
        "--seed",
        "3",
        "--out",
        p(&data),
    ]);
    ok(&[
        "corrupt",
        "--mode",
        "random",
        "--rate",
        "0.3",
        "--seed",
        "3",
        "--in",
        p(&data),
        "--out",
        p(&pair),
    ]);
    for f in ["corrupted.csv", "truth.csv", "eval_mask.csv"] {
        assert!(pair.join(f).exists(), "{f}");
    }

    let rbf_cfg = d.join("rbf.json");
    fs::write(&rbf_cfg, FAST_RBF).unwrap();
    let mirnn_cfg = d.join("mirnn.json");
    fs::write(&mirnn_cfg, FAST_MIRNN).unwrap();
    let corrupted = pair.join("corrupted.csv");
    let bank = d.join("bank.json");
    let report = d.join("fit.json");
    ok(&[
        "fit-rbf",
        "--input",
        p(&corrupted),
        "--config",
        p(&rbf_cfg),
        "--out",
        p(&bank),
        "--report",
        p(&report),
    ]);
    let r = json(&report);
    assert_eq!(r["config"]["k_per_stage"], 8);
    assert!(!r["stages"].as_array().unwrap().is_empty());
    assert_eq!(r["config_fingerprint"].as_str().unwrap().len(), 64);

    let model = d.join("model.json");
    let curve = d.join("curve.json");
    ok(&[
        "fit-mirnn",
        "--input",
        p(&corrupted),
        "--bank",
        p(&bank),
        "--config",
        p(&mirnn_cfg),
        "--out",
        p(&model),
        "--curve",
        p(&curve),
    ]);
    assert_eq!(json(&curve).as_array().unwrap().len(), 3);

    let imputed = d.join("imputed.csv");
    let plot = d.join("plot.csv");
    ok(&[
        "impute",
        "--model",
        p(&model),
        "--bank",
        p(&bank),
        "--input",
        p(&corrupted),
        "--out",
        p(&imputed),
        "--plot",
        p(&plot),
    ]);
    let rbf_only = d.join("rbf_imputed.csv");
    ok(&[
        "impute",
        "--bank",
        p(&bank),
        "--input",
        p(&corrupted),
        "--out",
        p(&rbf_only),
    ]);

    // no gaps left, observed cells untouched
    let src = fs::read_to_string(&corrupted).unwrap();
    let got = fs::read_to_string(&imputed).unwrap();
    for (a, b) in src.lines().zip(got.lines()).skip(1) {
        for (x, y) in a.split(',').zip(b.split(',')) {
            assert!(!y.is_empty());
            if !x.is_empty() {
                assert_eq!(x.parse::<f64>().unwrap(), y.parse::<f64>().unwrap());
            }
        }
    }
    let plot_text = fs::read_to_string(&plot).unwrap();
    assert!(plot_text.starts_with("kind,variable,t,value,truth"));

    let eval = d.join("report.json");
    ok(&[
        "eval",
        "--pred",
        p(&imputed),
        "--truth",
        p(&pair.join("truth.csv")),
        "--eval-mask",
        p(&pair.join("eval_mask.csv")),
        "--out",
        p(&eval),
    ]);
    let r = json(&eval);
    assert_eq!(r["pooled"]["count"], (80.0f64 * 4.0 * 0.3).round() as u64);
    assert!(r["pooled"]["mae"].as_f64().unwrap() > 0.0);
    assert_eq!(r["per_variable"].as_array().unwrap().len(), 4);
}

#[test]
fn long_term_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data.csv");
    ok(&["synth", "lorenz96", "--n", "300", "--out", p(&data)]);
    ok(&[
        "corrupt",
        "--mode",
        "long-term",
        "--rate",
        "0.2",
        "--terms",
        "50,80",
        "--seed",
        "1",
        "--in",
        p(&data),
        "--out",
        p(&d.join("pair")),
    ]);
    let mask = fs::read_to_string(d.join("pair/eval_mask.csv")).unwrap();
    let hidden = mask
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').skip(1).map(str::to_owned).collect::<Vec<_>>())
        .filter(|v| v == "1")
        .count();
    assert_eq!(hidden, 300);
}

fn make_pair(d: &Path) -> std::path::PathBuf {
    let data = d.join("data.csv");
    let pair = d.join("pair");
    ok(&[
        "synth",
        "lorenz96",
        "--n",
        "60",
        "--seed",
        "2",
        "--out",
        p(&data),
    ]);
    ok(&[
        "corrupt",
        "--mode",
        "random",
        "--rate",
        "0.3",
        "--seed",
        "2",
        "--in",
        p(&data),
        "--out",
        p(&pair),
    ]);
    pair
}

#[test]
fn ablate_writes_tables_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let pair = make_pair(d);
    let cfg = d.join("ablate.json");
    fs::write(&cfg, format!(r#"{{"rbf": {FAST_RBF}, "knn_k": 5}}"#)).unwrap();
    let results = d.join("results");
    let out = ok(&[
        "ablate",
        "--data",
        p(&pair),
        "--variants",
        "mim,mean,knn",
        "--seeds",
        "1,2",
        "--config",
        p(&cfg),
        "--out",
        p(&results),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("MIM"), "{stdout}");

    let run = json(&results.join("results.json"));
    assert_eq!(run["results"].as_array().unwrap().len(), 4);
    assert!(run["failures"].as_array().unwrap().is_empty());
    let summary = fs::read_to_string(results.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(results.join("plot/mim_seed1.csv").exists());
    assert!(!results.join("plot/mim_seed2.csv").exists());
    assert!(results.join("imputed/mim_seed2.csv").exists());
    assert!(results.join("imputed/knn.csv").exists());
}

#[test]
fn ablate_exits_nonzero_on_variant_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let pair = make_pair(d);
    let cfg = d.join("bad.json");
    fs::write(&cfg, r#"{"knn_k": 0}"#).unwrap();
    let results = d.join("results");
    let out = bin(&[
        "ablate",
        "--data",
        p(&pair),
        "--variants",
        "mean,knn",
        "--seeds",
        "1",
        "--config",
        p(&cfg),
        "--out",
        p(&results),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAILED KNN"));
    let run = json(&results.join("results.json"));
    assert_eq!(run["failures"].as_array().unwrap().len(), 1);
    assert_eq!(run["results"].as_array().unwrap().len(), 1);
}

#[test]
fn bad_input_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "timestamp,a,b\n0,1,2\n1,3\n").unwrap();
    let out = bin(&[
        "fit-rbf",
        "--input",
        p(&bad),
        "--out",
        p(&dir.path().join("b.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv:3:"), "{err}");

    let out = bin(&[
        "ablate",
        "--data",
        p(dir.path()),
        "--variants",
        "gan",
        "--out",
        "x",
    ]);
    assert!(!out.status.success());
}
