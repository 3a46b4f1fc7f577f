use std::path::Path;
use std::process::{Command, Output};

fn netnash(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netnash"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const LQ: &str = r#"{
    "mode": "exact",
    "instance": {"inline": {
        "topology": {"players": 2, "dims": [1, 1], "edges": [[0, 1], [1, 0]]},
        "game": {"kind": "scalar_lq", "k": [0.5, 0.5], "a": [1, 1], "weights": [[0, 1], [1, 0]]},
        "boxes": [{"lower": [0], "upper": [10]}, {"lower": [0], "upper": [10]}]
    }},
    "step": {"gamma": {"constant": 0.5}},
    "iters": 5000,
    "tol": 1e-10
}"#;

#[test]
fn solve_exact_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "lq.json", LQ);
    let out_dir = dir.path().join("out");
    let out = netnash(&["solve-exact", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "k,dist_sne,step_rel,weight_err,bias_err,residual,min_gram_eig,skips"
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
    assert_eq!(summary["mode"], "exact");
    assert!(out_dir.join("instance.json").exists());
}

#[test]
fn unknown_field_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", &LQ.replace("\"iters\"", "\"iterations\""));
    let out = netnash(&["solve-exact", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("iterations"));
}

#[test]
fn learning_without_gamma_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "nogamma.json", &LQ.replace(r#""step": {"gamma": {"constant": 0.5}},"#, ""));
    let out = netnash(&["learn", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step.gamma"));
}

#[test]
fn missing_config_file_fails() {
    let out = netnash(&["learn", "--config", "/nonexistent/config.json"]);
    assert!(!out.status.success());
    assert_ne!(out.status.code(), Some(2));
}

#[test]
fn oracle_prints_the_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "lq.json", LQ);
    let out = netnash(&["oracle", "--config", &cfg]);
    assert!(out.status.success());
    let sol: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for v in sol["x"].as_array().unwrap() {
        assert!((v.as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-8);
    }
}

#[test]
fn generated_instances_are_reproducible() {
    let a = netnash(&["gen-instance", "--seed", "4"]);
    let b = netnash(&["gen-instance", "--seed", "4"]);
    let c = netnash(&["gen-instance", "--seed", "5"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn seed_override_keeps_runs_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "learn.json",
        r#"{"mode": "learn", "instance": {"generated": {"seed": 2, "generator": {"players": 4, "chords": 1}}},
            "step": {"rho": "monotone", "gamma": {"power": 0.6}}, "iters": 120, "metrics_every": 1}"#,
    );
    let run = |name: &str| {
        let d = dir.path().join(name);
        let out = netnash(&["learn", "--config", &cfg, "--seed", "9", "--inner", "psg", "--out", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(d.join("metrics.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}
