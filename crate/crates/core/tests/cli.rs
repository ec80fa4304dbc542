use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

const S2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_debranges-lab"));
    c.env_remove("DEBRANGES_LAB_THREADS");
    c
}

fn scratch(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("debranges-lab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, Value, Output) {
    let out = bin().args(args).output().unwrap();
    let v = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap(), v, out)
}

fn taylor(coeffs: &[f64]) -> String {
    let pairs: Vec<String> = coeffs.iter().map(|x| format!("[{x},0]")).collect();
    format!(r#"{{"type":"taylor","coeffs":[{}]}}"#, pairs.join(","))
}

fn b_file(name: &str, coeffs: &[f64]) -> String {
    scratch(name, &taylor(coeffs)).to_str().unwrap().to_string()
}

#[test]
fn factor_outputs_the_mate() {
    let p = b_file("b1.json", &[0.0, S2]);
    let (code, v, _) = run(&["factor", "--input", &p]);
    assert_eq!(code, 0);
    let a0 = v["a"]["coeffs"][0][0].as_f64().unwrap();
    assert!((a0 - S2).abs() < 1e-8);
    assert!(v["residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(v["extremality"]["verdict"], "Nonextreme");

    // a = (1 + z)/2 vanishes at −1, so the grid residual decays like grid⁻²
    let p = b_file("b2.json", &[0.5, -0.5]);
    let (code, v, _) = run(&["factor", "--input", &p, "--grid", "4096"]);
    assert_eq!(code, 0);
    assert!(v["residual"].as_f64().unwrap() < 1e-7);
}

#[test]
fn factor_extreme_input_exits_3_with_report() {
    let p = b_file("bz.json", &[0.0, 1.0]);
    let (code, v, _) = run(&["factor", "--input", &p]);
    assert_eq!(code, 3);
    assert_eq!(v["status"], "error");
    assert_eq!(v["error"]["kind"], "ExtremeInput");
    assert_eq!(v["details"]["verdict"], "Extreme");
}

#[test]
fn factor_csv_is_a_coefficient_table() {
    let p = b_file("b1c.json", &[0.0, S2]);
    let out = bin().args(["factor", "--input", &p, "--format", "csv"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,re_a,im_a"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(first[0], 0.0);
    assert!((first[1] - S2).abs() < 1e-8);
}

#[test]
fn check_exit_codes_follow_the_verdict() {
    let pos = scratch(
        "pos.json",
        &format!(r#"{{"phi1":{},"phi2":{}}}"#, taylor(&[S2]), taylor(&[0.0, S2])),
    );
    let (code, v, _) = run(&["check", "--input", pos.to_str().unwrap(), "--theta-grid", "36", "--psi-grid", "36", "--truncation", "64"]);
    assert_eq!(code, 0);
    assert_eq!(v["diagnostics"]["verdict"], "equivalent_to_some_yb");

    let a = 0.05;
    let phi2 = format!(r#"{{"type":"rational","num":[[{},0],[{S2},0]],"den":[[1,0],[{},0]]}}"#, -a * S2, -a);
    let neg = scratch("neg.json", &format!(r#"{{"phi1":{},"phi2":{phi2}}}"#, taylor(&[0.0, 0.0, S2])));
    let (code, v, _) = run(&["check", "--input", neg.to_str().unwrap(), "--theta-grid", "60", "--psi-grid", "60", "--truncation", "64"]);
    assert_eq!(code, 1);
    assert_eq!(v["diagnostics"]["c4_status"], "fail");
}

#[test]
fn check_rejects_non_star_inner_pairs() {
    let bad = scratch("bad.json", &format!(r#"{{"phi1":{},"phi2":{}}}"#, taylor(&[0.5]), taylor(&[0.0, 0.5])));
    let (code, v, _) = run(&["check", "--input", bad.to_str().unwrap(), "--truncation", "32"]);
    assert_eq!(code, 4);
    assert_eq!(v["error"]["kind"], "NotStarInner");
}

#[test]
fn malformed_input_gives_error_report() {
    let p = scratch("junk.json", "{not json");
    let (code, v, _) = run(&["model", "--input", p.to_str().unwrap()]);
    assert_eq!(code, 4);
    assert_eq!(v["error"]["kind"], "InvalidInput");
    let (code, v, _) = run(&["factor"]);
    assert_eq!(code, 4);
    assert_eq!(v["status"], "error");
}

#[test]
fn print_config_reflects_overrides() {
    let (code, v, _) = run(&["--print-config", "--tol", "coincide=1e-9", "--truncation", "64", "--seed", "7"]);
    assert_eq!(code, 0);
    assert_eq!(v["tolerances"]["coincide"], 1e-9);
    assert_eq!(v["tolerances"]["stability"], 1e-6);
    assert_eq!(v["truncation"], 64);
    assert_eq!(v["seed"], 7);
    assert_eq!(v["theta_grid"], 720);

    let (code, v, _) = run(&["--print-config", "--tol", "nonsense=1"]);
    assert_eq!(code, 4);
    assert_eq!(v["error"]["kind"], "InvalidInput");
    let (code, _, _) = run(&["--print-config", "--truncation", "100"]);
    assert_eq!(code, 4);
}

#[test]
fn threads_fall_back_to_environment() {
    let out = bin().env("DEBRANGES_LAB_THREADS", "3").arg("--print-config").output().unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["threads"], 3);
}

#[test]
fn model_report_is_deterministic() {
    let p = b_file("bm.json", &[0.3, 0.4]);
    let o1 = scratch("m1.json", "");
    let o2 = scratch("m2.json", "");
    for (o, threads) in [(&o1, "1"), (&o2, "4")] {
        let st = bin()
            .args(["model", "--input", &p, "--truncation", "32", "--tilde", "32", "--threads", threads, "--output"])
            .arg(o)
            .status()
            .unwrap();
        assert!(st.success());
    }
    let (a, b) = (std::fs::read(&o1).unwrap(), std::fs::read(&o2).unwrap());
    assert_eq!(a, b);
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["profile"]["defect"], 2);
    assert_eq!(v["profile"]["codefect"], 1);
    assert!(v["char_fn"]["residual"].as_f64().unwrap() < 1e-6);
    assert!(v["tilde"]["dilation_residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn dilate_reports_rank_one_defects() {
    let pair = scratch("dpair.json", &format!(r#"{{"phi1":{},"phi2":{}}}"#, taylor(&[S2]), taylor(&[0.0, S2])));
    let (code, v, _) = run(&["dilate", "--input", pair.to_str().unwrap(), "--truncation", "32", "--xi", "0.6,0,0,0.8", "--m", "32"]);
    assert_eq!(code, 0);
    assert_eq!(v["profile"]["defect"], 1);
    assert_eq!(v["profile"]["codefect"], 1);
    // a_ξ = sqrt((1 − α²)/(1 − α²|ξ2|²)) with α = 1/√2, |ξ2| = 0.8
    let expect = (0.5f64 / (1.0 - 0.5 * 0.64)).sqrt();
    assert!((v["a_xi"].as_f64().unwrap() - expect).abs() < 1e-12);
    assert_eq!(v["b_xi"]["extremality"]["verdict"], "Nonextreme");

    let (code, _, _) = run(&["dilate", "--input", pair.to_str().unwrap(), "--xi", "1,2,3"]);
    assert_eq!(code, 4);
}

#[test]
fn equivalent_models_at_small_truncation() {
    let (code, v, _) = run(&["reproduce", "section-8", "--truncation", "64"]);
    assert_eq!(code, 0);
    assert!(v["coincidence"]["residual"].as_f64().unwrap() < 1e-2);
    assert!(v["distance"].as_f64().unwrap() < 1e-2);
    let out = bin().args(["reproduce", "section-8", "--format", "csv"]).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn question8_finds_outer_combinations_for_z_over_sqrt2() {
    let p = b_file("q8.json", &[0.0, S2]);
    let (code, v, _) = run(&["question8", "--input", &p, "--scan-theta", "8", "--scan-psi", "8"]);
    assert_eq!(code, 0);
    assert_eq!(v["exploratory"], true);
    assert_eq!(v["heuristic"], false);
    assert_eq!(v["beta_zero_outer"], true);
    let cells = v["outer_cells"].as_array().unwrap();
    assert!(!cells.is_empty());
    // α a + β b = (cos θ + sin θ e^{iψ} z)/√2 is outer exactly when sin θ ≤ cos θ
    for cell in cells {
        let t = cell["theta"].as_f64().unwrap();
        assert!(t.sin() <= t.cos() + 1e-12, "theta {t}");
    }
    let n_expected = (1..=8).filter(|&i| {
        let t = std::f64::consts::FRAC_PI_2 * i as f64 / 8.0;
        t.sin() <= t.cos() + 1e-12
    });
    assert_eq!(cells.len(), n_expected.count() * 8);

    let p = b_file("q8z.json", &[0.0, 1.0]);
    let (code, _, _) = run(&["question8", "--input", &p]);
    assert_eq!(code, 3);
}
