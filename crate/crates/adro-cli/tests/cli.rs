//! End-to-end tests of the `adro` binary: exit-code contract, record
//! schemas, seeded reproducibility, and the simulate → report round trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use serde_json::Value;
use tempfile::TempDir;

fn adro() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adro"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawning adro")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

fn write_linear_csv(path: &Path, beta: &[f64], n: usize, noise_seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    // Small deterministic dataset via a hand-rolled LCG, independent of the
    // library's generators.
    let mut state = noise_seed.wrapping_mul(6364136223846793005).wrapping_add(1);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let d = beta.len();
    let mut rows = String::new();
    rows.push_str(&(1..=d).map(|j| format!("x{j}")).collect::<Vec<_>>().join(","));
    rows.push_str(",y\n");
    let mut features = DMatrix::zeros(n, d);
    let mut labels = DVector::zeros(n);
    for i in 0..n {
        let xs: Vec<f64> = (0..d).map(|_| next()).collect();
        let y: f64 =
            xs.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>() + 0.05 * next();
        for (j, x) in xs.iter().enumerate() {
            features[(i, j)] = *x;
        }
        labels[i] = y;
        rows.push_str(
            &xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
        );
        rows.push_str(&format!(",{y}\n"));
    }
    std::fs::write(path, rows).unwrap();
    (features, labels)
}

#[test]
fn fit_zero_radius_reproduces_ols() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    let (x, y) = write_linear_csv(&data, &[1.2, -0.4], 120, 9);
    let out = dir.path().join("fit.json");
    let output = run(adro()
        .args(["fit", "--model", "linear", "--tau", "0", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&out));
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let record: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(record["schema"], 1);
    assert_eq!(record["model"], "linear");
    assert_eq!(record["n_radius"], 120);
    assert!(record["converged"].as_bool().unwrap());
    assert!(record["lambda_star"].is_null());
    let beta: Vec<f64> = record["beta_dro"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();

    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let ols = xtx.lu().solve(&xty).unwrap();
    assert!((DVector::from_column_slice(&beta) - ols).norm() < 1e-6);
}

#[test]
fn fit_missing_file_is_input_error() {
    let output = run(adro().args([
        "fit",
        "--model",
        "linear",
        "--tau",
        "0.5",
        "--data",
        "/nonexistent/never.csv",
    ]));
    assert_eq!(code(&output), 1);
}

#[test]
fn fit_malformed_csv_names_the_line() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "x1,x2,y\n0.1,0.2,0.3\n0.4,oops,0.5\n").unwrap();
    let output = run(adro()
        .args(["fit", "--model", "linear", "--tau", "0", "--data"])
        .arg(&data));
    assert_eq!(code(&output), 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
}

#[test]
fn fit_rejects_wrong_header() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "a,b,c\n0.1,0.2,0.3\n").unwrap();
    let output = run(adro()
        .args(["fit", "--model", "linear", "--tau", "0", "--data"])
        .arg(&data));
    assert_eq!(code(&output), 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 1"));
}

#[test]
fn fit_iteration_cap_exits_two_with_record() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    write_linear_csv(&data, &[1.0, -1.0], 80, 3);
    let out = dir.path().join("fit.json");
    let output = run(adro()
        .args(["fit", "--model", "linear", "--tau", "1", "--max-iters", "1", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&out));
    assert_eq!(code(&output), 2);
    let record: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(record["converged"], Value::Bool(false));
}

fn fixture_fit_record(dir: &Path, beta: &[f64], tau: f64, n: usize, model: &str) -> PathBuf {
    let path = dir.join("fit.json");
    let record = serde_json::json!({
        "schema": 1,
        "model": model,
        "tau": tau,
        "n_radius": n,
        "beta_dro": beta,
        "robust_loss": 0.0,
        "lambda_star": null,
        "iterations": 0,
        "converged": true,
        "grad_norm": 0.0,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&record).unwrap()).unwrap();
    path
}

#[test]
fn adjust_closed_form_fixture() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    write_linear_csv(&data, &[0.6, 0.8], 20, 5);
    let fit = fixture_fit_record(dir.path(), &[0.6, 0.8], 2.0, 400, "linear");
    let out = dir.path().join("adj.json");
    let output = run(adro()
        .args(["adjust", "--closed-form", "--sigma", "0.1", "--c-value", "1", "--fit"])
        .arg(&fit)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&out));
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let record: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(record["method"], "closed_form");
    let beta: Vec<f64> = record["beta_adro"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((beta[0] - 0.606).abs() < 1e-12);
    assert!((beta[1] - 0.808).abs() < 1e-12);
    assert!((record["adjustment_distance"].as_f64().unwrap() - 0.01).abs() < 1e-12);
}

#[test]
fn adjust_zero_tau_is_identity() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    write_linear_csv(&data, &[0.6, 0.8], 20, 5);
    let fit = fixture_fit_record(dir.path(), &[0.6, 0.8], 0.0, 400, "linear");
    let out = dir.path().join("adj.json");
    let output = run(adro()
        .args(["adjust", "--closed-form", "--sigma", "0.1", "--c-value", "1", "--fit"])
        .arg(&fit)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&out));
    assert_eq!(code(&output), 0);
    let record: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let beta: Vec<f64> = record["beta_adro"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(beta, vec![0.6, 0.8]);
}

#[test]
fn adjust_closed_form_rejects_logistic_fit() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "x1,x2,y\n0.5,0.2,1\n-0.3,0.4,-1\n").unwrap();
    let fit = fixture_fit_record(dir.path(), &[0.5, 0.5], 1.0, 2, "logistic");
    let output = run(adro()
        .args(["adjust", "--closed-form", "--fit"])
        .arg(&fit)
        .arg("--data")
        .arg(&data));
    assert_eq!(code(&output), 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("linear fits only"));
}

#[test]
fn adjust_newton_on_logistic_data() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    // Deterministic ±1 labels on a small grid of features.
    let mut csv = String::from("x1,x2,y\n");
    for i in 0..60 {
        let x1 = ((i % 11) as f64 - 5.0) / 3.0;
        let x2 = ((i % 7) as f64 - 3.0) / 2.0;
        let y = if x1 + 0.5 * x2 > 0.0 { 1 } else { -1 };
        csv.push_str(&format!("{x1},{x2},{y}\n"));
    }
    std::fs::write(&data, csv).unwrap();
    let fit = fixture_fit_record(dir.path(), &[0.8, 0.4], 1.0, 60, "logistic");
    let out = dir.path().join("adj.json");
    let output = run(adro()
        .args(["adjust", "--fit"])
        .arg(&fit)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&out));
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let record: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(record["method"], "newton");
    assert!(record["existence_margin"].as_f64().unwrap() > 0.0);
    assert!(record["residual_norm"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn simulate_report_round_trip_and_determinism() {
    let dir = TempDir::new().unwrap();
    let report_a = dir.path().join("a.json");
    let report_b = dir.path().join("b.json");
    for path in [&report_a, &report_b] {
        let output = run(adro()
            .args([
                "simulate",
                "--model",
                "linear",
                "--beta-star",
                "0.9486832980505138,-0.31622776601683794",
                "--sigma",
                "0.1",
                "--n-grid",
                "40,60",
                "--tau-grid",
                "0,1",
                "--replicates",
                "3",
                "--seed",
                "11",
                "--out",
            ])
            .arg(path));
        assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    }
    let bytes_a = std::fs::read(&report_a).unwrap();
    let bytes_b = std::fs::read(&report_b).unwrap();
    assert_eq!(bytes_a, bytes_b, "same-seed runs must be byte-identical");

    let rendered = dir.path().join("plot.json");
    let csv_dir = dir.path().join("tables");
    let output = run(adro()
        .args(["report", "--input"])
        .arg(&report_a)
        .arg("--out")
        .arg(&rendered)
        .arg("--csv")
        .arg(&csv_dir));
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let report: Value = serde_json::from_str(&std::fs::read_to_string(&report_a).unwrap()).unwrap();
    let plot: Value = serde_json::from_str(&std::fs::read_to_string(&rendered).unwrap()).unwrap();
    let n_records = report["records"].as_array().unwrap().len();
    let boxed: u64 = plot["diff_boxplots"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["replicates"].as_u64().unwrap())
        .sum();
    assert_eq!(boxed as usize, n_records, "every record lands in exactly one cell");
    // 2 estimators x 2 taus.
    assert_eq!(plot["mse_series"].as_array().unwrap().len(), 4);

    let mse_csv = std::fs::read_to_string(csv_dir.join("mse_series.csv")).unwrap();
    assert!(mse_csv.starts_with("estimator,tau,n,log_n,mean_sq_err,replicates"));
    let box_csv = std::fs::read_to_string(csv_dir.join("diff_boxplots.csv")).unwrap();
    assert!(box_csv.starts_with("n,tau,min,q1,median,q3,max,replicates"));
}

#[test]
fn report_rejects_empty_file_and_bad_schema() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    let output = run(adro().args(["report", "--input"]).arg(&empty));
    assert_eq!(code(&output), 1);

    let bad = dir.path().join("bad.json");
    let report = serde_json::json!({
        "schema": 99,
        "config": {
            "model_kind": "linear",
            "beta_star": [1.0, 0.0],
            "sigma": 0.1,
            "n_grid": [10],
            "tau_grid": [1.0],
            "replicates": 1,
            "base_seed": 0,
        },
        "records": [],
        "summaries": [],
    });
    std::fs::write(&bad, serde_json::to_string(&report).unwrap()).unwrap();
    let output = run(adro().args(["report", "--input"]).arg(&bad));
    assert_eq!(code(&output), 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("schema"));
}

#[test]
fn thread_cap_is_honored_and_validated() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    let output = run(adro()
        .env("ADRO_THREADS", "1")
        .args([
            "simulate",
            "--model",
            "linear",
            "--beta-star",
            "1,0",
            "--sigma",
            "0.1",
            "--n-grid",
            "30",
            "--tau-grid",
            "1",
            "--replicates",
            "2",
            "--seed",
            "3",
            "--out",
        ])
        .arg(&out));
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let output = run(adro().env("ADRO_THREADS", "zero").args(["report", "--input", "x"]));
    assert_eq!(code(&output), 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("ADRO_THREADS"));
}

#[test]
fn fit_auto_radius_uses_dataset_rows() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    let mut csv = String::from("x1,x2,y\n");
    for i in 0..50 {
        let x1 = ((i % 9) as f64 - 4.0) / 3.0;
        let x2 = ((i % 5) as f64 - 2.0) / 2.0;
        let y = if x1 - x2 > 0.1 { 1 } else { -1 };
        csv.push_str(&format!("{x1},{x2},{y}\n"));
    }
    std::fs::write(&data, csv).unwrap();
    let out = dir.path().join("fit.json");
    let output = run(adro()
        .args(["fit", "--model", "logistic", "--tau", "1", "--n-for-radius", "auto", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&out));
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let record: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(record["n_radius"], 50);
    assert!(record["lambda_star"].as_f64().unwrap() > 0.0);
}
