use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyadic-lab"))
        .args(args)
        .env_remove("DYADIC_LAB_OUT")
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("bad json ({e}): {}", String::from_utf8_lossy(&out.stderr)))
}

fn scratch_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dyadic-lab-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn without_meta(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("meta");
    v
}

#[test]
fn selftest_reports_parseval() {
    let out = lab(&["selftest", "--d", "1", "--N", "6", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["pass"], true);
    let checks = r["results"]["checks"].as_array().unwrap();
    let parseval = checks.iter().find(|c| c["name"] == "parseval").unwrap();
    assert!(parseval["value"].as_f64().unwrap() < 1e-12);
}

#[test]
fn verify_decomp_example() {
    let out =
        lab(&["verify-decomp", "--d", "1", "--N", "6", "--imax", "4", "--jmax", "4", "--trials", "100", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!(r["results"]["max_residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(r["results"]["one_parameter"].as_array().unwrap().len(), 25 + 2);
    let cfg = &r["config"];
    assert_eq!((cfg["N"].as_u64(), cfg["imax"].as_u64(), cfg["trials"].as_u64()), (Some(6), Some(4), Some(100)));
    assert_eq!(cfg["tol"].as_f64(), Some(1e-9));
}

#[test]
fn bound_study_geometric_constant() {
    let out = lab(&["bound-study", "--delta", "1.0", "--imax", "4", "--jmax", "4", "--trials", "20"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    let closed = r["results"]["geometric_constant_closed_form"].as_f64().unwrap();
    let truncated = r["results"]["geometric_constant_truncated"].as_f64().unwrap();
    assert!((closed - truncated).abs() < 1e-10);
    // grouped by m = max(i, j): 2m+1 pairs each weighted (1+m) 2^{-m/2}
    let q = 2f64.powf(-0.5);
    let series: f64 = (0..2000).map(|m| (2 * m + 1) as f64 * (m + 1) as f64 * q.powi(m)).sum();
    assert!((closed - series).abs() < 1e-10 * series, "{closed} vs {series}");
    // the study's own constant is the sum truncated at max(imax, jmax)
    let at4: f64 = (0..=4).map(|m| (2 * m + 1) as f64 * (m + 1) as f64 * q.powi(m)).sum();
    assert!((r["results"]["study"]["geometric_constant"].as_f64().unwrap() - at4).abs() < 1e-12);
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = scratch_dir("badcfg");
    let path = dir.join("cfg.json");
    std::fs::write(&path, r#"{"N": 4, "depth": 3}"#).unwrap();
    let out = lab(&["selftest", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("depth"));
    for args in [
        &["verify-decomp", "--imax", "9"][..],
        &["bound-study", "--delta", "1.5"],
        &["norm-study", "--kinds", "Q"],
        &["mc-demo", "--d", "2"],
        &["selftest", "--frobnicate"],
    ] {
        assert_eq!(lab(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn config_file_values_apply_and_flags_win() {
    let dir = scratch_dir("cfg");
    let path = dir.join("cfg.json");
    std::fs::write(&path, r#"{"N": 3, "d": 2, "seed": 11}"#).unwrap();
    let r = report(&lab(&["selftest", "--config", path.to_str().unwrap(), "--seed", "12"]));
    assert_eq!(
        (r["config"]["N"].as_u64(), r["config"]["d"].as_u64(), r["config"]["seed"].as_u64()),
        (Some(3), Some(2), Some(12))
    );
}

#[test]
fn assertion_failure_exits_one_with_replay_seed() {
    let out = lab(&["verify-decomp", "--N", "3", "--imax", "1", "--jmax", "1", "--trials", "5", "--tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("replay seed"), "{stderr}");
    let r = report(&out);
    assert_eq!(r["pass"], false);
    assert!(r["failures"][0]["replay_seed"].is_u64());
}

#[test]
fn reports_are_deterministic() {
    let args = ["verify-decomp", "--N", "4", "--imax", "2", "--jmax", "2", "--trials", "30", "--seed", "3"];
    let a = without_meta(report(&lab(&args)));
    let b = without_meta(report(&lab(&args)));
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());

    let mut one = args.to_vec();
    one.extend(["--threads", "1"]);
    let mut two = args.to_vec();
    two.extend(["--threads", "2"]);
    let c = report(&lab(&one));
    let d = report(&lab(&two));
    assert_eq!(c["results"], d["results"]);
    assert_eq!(c["results"], a["results"]);
}

#[test]
fn env_var_sets_output_directory_and_csv_export() {
    let dir = scratch_dir("env");
    let out = Command::new(env!("CARGO_BIN_EXE_dyadic-lab"))
        .args(["norm-study", "--kinds", "Bk,Sk", "--kmax", "2", "--trials", "10", "--format", "csv"])
        .env("DYADIC_LAB_OUT", &dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dir.join("norm-study.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(lines.next().unwrap(), "kind,k,l,i,j,trials,max_ratio,seed,worst_seed");
    assert_eq!(lines.count(), 6);
}
