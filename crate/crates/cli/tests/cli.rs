use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use inar_mixing::chains::binomial_death_chain;
use inar_mixing::mixing::rho_star_window;
use serde_json::Value;

fn inarmix(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inarmix"))
        .args(args)
        .env("INARMIX_OUT_DIR", dir)
        .output()
        .expect("binary runs")
}

fn json_out(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn gap_certificates() {
    let dir = tempfile::tempdir().unwrap();
    for (a, eps, m) in [("0.5", "1.0", 4), ("0.5", "0.3", 7), ("0.9", "0.3", 44)] {
        let v = json_out(&inarmix(dir.path(), &["gap", "--a", a, "--epsilon", eps]));
        assert_eq!(v["certificate"]["m"], m, "a={a} eps={eps}");
        assert_eq!(v["config"]["delta_bound"], "identity");
    }
    assert!(dir.path().join("gap.json").exists());
    let o = inarmix(dir.path(), &["gap", "--delta-bound", "sharp"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown delta bound"));
}

#[test]
fn simulate_shape_determinism_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate", "direct", "--a", "0.5", "--lambda", "1", "--length", "100", "--paths", "1000", "--seed", "7",
    ];
    assert_eq!(code(&inarmix(dir.path(), &args)), 0);
    let csv = fs::read_to_string(dir.path().join("direct_paths.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 1001);
    assert!(rows[1..].iter().all(|r| r.split(',').count() == 100));
    assert!(csv.lines().any(|l| l.starts_with("# config: ")));
    assert!(dir.path().join("direct_decomposition.csv").exists());

    let again = tempfile::tempdir().unwrap();
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "3"]);
    assert_eq!(code(&inarmix(again.path(), &threaded)), 0);
    assert_eq!(fs::read_to_string(again.path().join("direct_paths.csv")).unwrap(), csv);

    // the embedded config reproduces the artifact
    let replay = tempfile::tempdir().unwrap();
    let src = dir.path().join("direct_paths.csv");
    let o = inarmix(replay.path(), &["--config", src.to_str().unwrap(), "simulate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(replay.path().join("direct_paths.csv")).unwrap(), csv);
}

#[test]
fn simulate_other_constructions() {
    let dir = tempfile::tempdir().unwrap();
    for c in ["superposition", "death-poisson", "death-binomial", "indicator"] {
        let o = inarmix(
            dir.path(),
            &["simulate", c, "--length", "5", "--paths", "20", "--a", "0.3"],
        );
        assert_eq!(code(&o), 0, "{c}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(dir.path().join(format!("{c}_paths.csv")).exists(), "{c}");
    }
    assert!(dir.path().join("superposition_decomposition.csv").exists());
    assert!(!dir.path().join("death-poisson_decomposition.csv").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = inarmix(dir.path(), &["simulate", "direct", "--a", "1.5"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("a = 1.5"));
    assert_eq!(code(&inarmix(dir.path(), &["simulate", "garden"])), 2);
    assert_eq!(code(&inarmix(dir.path(), &["simulate"])), 2);
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"lenght": 3}"#).unwrap();
    assert_eq!(
        code(&inarmix(
            dir.path(),
            &["--config", cfg.to_str().unwrap(), "simulate", "direct"]
        )),
        2
    );
}

#[test]
fn rho_table_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_out(&inarmix(dir.path(), &["rho", "inar", "--a", "0.5", "--lambda", "1"]));
    let rate = v["fit"]["rate"].as_f64().unwrap();
    assert!((rate - 0.5).abs() < 0.01, "{rate}");
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 6);
    assert!(entries.iter().all(|e| e["truncation_error"].is_number()));

    let v = json_out(&inarmix(dir.path(), &["rho", "iid", "--lambda", "2", "--n-max", "4"]));
    assert!(v["entries"]
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e["rho"].as_f64().unwrap() < 1e-10));

    let o = inarmix(dir.path(), &["rho", "inar", "--cap", "3"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("hint"));
}

#[test]
fn rho_star_passthrough_and_limits() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_out(&inarmix(
        dir.path(),
        &["rho-star", "indicator", "--width", "2", "--gap", "1"],
    ));
    assert_eq!(v["result"]["pair_count"], 1);

    let v = json_out(&inarmix(
        dir.path(),
        &[
            "rho-star",
            "death-binomial",
            "--a",
            "0.3",
            "--population",
            "3",
            "--width",
            "4",
            "--gap",
            "2",
        ],
    ));
    let spec = binomial_death_chain(3, 0.5, 0.3).unwrap();
    let direct = rho_star_window(&spec, 4, 2, 3).unwrap();
    assert_eq!(v["result"]["value"].as_f64().unwrap(), direct.value);
    assert_eq!(v["result"]["pair_count"], direct.pair_count);

    let v = json_out(&inarmix(
        dir.path(),
        &["rho-star", "indicator", "--width", "3", "--gap", "3"],
    ));
    assert_eq!(v["result"]["vacuous"], true);
    assert_eq!(v["result"]["value"].as_f64().unwrap(), 0.0);

    assert_eq!(
        code(&inarmix(dir.path(), &["rho-star", "indicator", "--width", "9"])),
        3
    );
}

#[test]
fn marginal_of_death_chain() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_out(&inarmix(
        dir.path(),
        &["marginal", "death-poisson", "--lambda", "2", "--a", "0.5", "--j", "1"],
    ));
    // Poisson(1) after one thinning step
    let p0 = v["probs"][0].as_f64().unwrap();
    assert!((p0 - (-1.0f64).exp()).abs() < 1e-12);
}

fn small_verify_config(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("verify.json");
    fs::write(
        &cfg,
        r#"{"n_paths": 10000, "path_length": 6, "grid_a": [0.5], "grid_lambda": [1.0],
            "equivalence_paths": 20000, "property_checks": false}"#,
    )
    .unwrap();
    cfg
}

#[test]
fn verify_passes_deterministically_and_echoes_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_verify_config(dir.path());
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&inarmix(dir.path(), &["--config", c, "verify"])), 0);
    let first = fs::read(dir.path().join("verify_report.json")).unwrap();
    assert_eq!(code(&inarmix(dir.path(), &["--config", c, "verify"])), 0);
    assert_eq!(fs::read(dir.path().join("verify_report.json")).unwrap(), first);

    assert_eq!(
        code(&inarmix(dir.path(), &["--config", c, "verify", "--seed", "4242"])),
        0
    );
    let v: Value = serde_json::from_slice(&fs::read(dir.path().join("verify_report.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["seed"]["root_seed"], 4242);
}

#[test]
fn verify_control_fails_with_named_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_verify_config(dir.path());
    let o = inarmix(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "verify",
            "--control",
            "corrupt-innovation",
        ],
    );
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAILED: innovation-independence"));
}

#[test]
fn verify_rejects_malformed_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("v.json");
    fs::write(&cfg, r#"{"n_paths": "many"}"#).unwrap();
    assert_eq!(
        code(&inarmix(dir.path(), &["--config", cfg.to_str().unwrap(), "verify"])),
        2
    );
    fs::write(&cfg, r#"{"n_paths": 10}"#).unwrap();
    assert_eq!(
        code(&inarmix(dir.path(), &["--config", cfg.to_str().unwrap(), "verify"])),
        2
    );
}
