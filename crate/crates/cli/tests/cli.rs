use std::fs;
use std::process::{Command, Output};

fn rcfr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcfr")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const HEADER: &str = "method,dataset,seed,alpha,lambda_w,lambda_h,rmse_tau,target_risk,risk_arm0,risk_arm1,wall_ms,status";

#[test]
fn synth_da_smoke_writes_one_row() {
    let o = rcfr(&["synth-da", "--n", "100", "--m", "100", "--method", "is", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], HEADER);
    assert!(lines[1].starts_with("is,synth-da-n100-m100-d10,7,"));
    let risk: f64 = lines[1].split(',').nth(7).unwrap().parse().unwrap();
    assert!(risk.is_finite() && risk > 0.0);
}

#[test]
fn unknown_method_is_a_config_error_listing_valid_names() {
    let o = rcfr(&["synth-da", "--method", "bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for name in ["rcfr", "is", "isc5", "isc10", "uniform"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn clipped_weights_differ_from_exact() {
    let risk = |m: &str| -> f64 {
        let o = rcfr(&["synth-da", "--n", "80", "--m", "100", "--method", m, "--seed", "3"]);
        stdout(&o).lines().nth(1).unwrap().split(',').nth(7).unwrap().parse().unwrap()
    };
    assert_ne!(risk("isc5"), risk("is"));
}

#[test]
fn cate_ols_smoke_with_summary_rows() {
    let o = rcfr(&["cate", "--synthetic", "linear", "--method", "ols", "--seeds", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let seeds: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(seeds, ["0", "1", "2", "mean", "se"]);
    let rmse: f64 = text.lines().nth(1).unwrap().split(',').nth(6).unwrap().parse().unwrap();
    assert!(rmse.is_finite());
    assert!(String::from_utf8_lossy(&o.stderr).contains("±"));
}

#[test]
fn alpha_modes_are_labelled() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fast.json");
    fs::write(&cfg, r#"{"max_epochs": 4, "batch_size": 32, "alpha_grid": [0.5, 5]}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    for (mode, label) in [("adaptive", "rcfr-adaptive"), ("oracle", "rcfr-oracle")] {
        let o = rcfr(&[
            "cate", "--synthetic", "quadratic", "--n", "80", "--seeds", "1", "--method", "rcfr", "--alpha-mode", mode, "--config", cfg,
            "--no-summary",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let text = stdout(&o);
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with(&format!("{label},")), "{row}");
        let alpha: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        if mode == "oracle" {
            assert!(alpha == 0.5 || alpha == 5.0);
        }
    }
}

#[test]
fn schema_errors_exit_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "treatment,y_factual\n1,2\n").unwrap();
    let o = rcfr(&["cate", "--data", path.to_str().unwrap(), "--method", "ols"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.csv: 2 columns") && err.contains("treatment,y_factual,y_cfactual,mu0,mu1"), "{err}");
}

#[test]
fn gradcheck_passes_and_catches_injected_fault() {
    let o = rcfr(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0));
    let report = stdout(&o);
    assert!(report.lines().filter(|l| l.ends_with(" ok")).count() >= 3, "{report}");
    let o = rcfr(&["gradcheck", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["synth-da", "cate", "sweep", "gradcheck", "inspect"] {
        let o = rcfr(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(stdout(&o).contains("Usage"));
    }
    let help = stdout(&rcfr(&["gradcheck", "--help"]));
    assert!(!help.contains("inject-fault"));
    assert_eq!(rcfr(&[]).status.code(), Some(1));
}

#[test]
fn sweep_output_is_independent_of_jobs_and_saved_models_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{"seed": 4, "replicates": 2, "base": {"max_epochs": 5},
            "grid": {"lambda_w": [0.001, 1]}, "methods": ["rcfr", "uniform"],
            "datasets": [{"kind": "synthetic-da", "n": 30, "m": 50, "d": 3}]}"#,
    )
    .unwrap();
    let run = |jobs: &str| {
        let o = rcfr(&["sweep", "--config", cfg.to_str().unwrap(), "--jobs", jobs]);
        assert_eq!(o.status.code(), Some(0));
        o.stdout
    };
    let one = run("1");
    assert_eq!(one, run("3"));
    assert_eq!(String::from_utf8(one).unwrap().lines().count(), 1 + 8);

    let o = rcfr(&["inspect", "--config", cfg.to_str().unwrap()]);
    assert!(stdout(&o).contains("8 cells"));

    let model = dir.path().join("m.json");
    let o = rcfr(&["synth-da", "--n", "40", "--m", "60", "--d", "3", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "sweep keys are not training keys");
    let o = rcfr(&["synth-da", "--n", "40", "--m", "60", "--d", "3", "--save-model", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = rcfr(&["inspect", "--model", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("input dim: 3"));
}

#[test]
fn inspect_data_and_training_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let mut text = String::from("treatment,y_factual,y_cfactual,mu0,mu1");
    for k in 1..=25 {
        text.push_str(&format!(",x{k}"));
    }
    text.push('\n');
    for i in 0..4 {
        text.push_str(&format!("{},1,2,1,2{}\n", i % 2, ",0.5".repeat(25)));
    }
    fs::write(&path, text).unwrap();
    let o = rcfr(&["inspect", "--data", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("4 rows, 25 features, 2 treated"));

    let cfg = dir.path().join("t.json");
    fs::write(&cfg, r#"{"alpha": 3.5}"#).unwrap();
    let o = rcfr(&["inspect", "--config", cfg.to_str().unwrap()]);
    assert!(stdout(&o).contains("\"alpha\": 3.5"));
    fs::write(&cfg, r#"{"alpah": 3.5}"#).unwrap();
    assert_eq!(rcfr(&["inspect", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn numerical_abort_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.json");
    fs::write(&cfg, r#"{"learning_rate": 1e300, "max_epochs": 5}"#).unwrap();
    let o = rcfr(&["synth-da", "--n", "30", "--m", "40", "--d", "3", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
