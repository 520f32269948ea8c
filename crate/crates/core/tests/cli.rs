use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/fixtures").join(name)
}

fn castlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_castlab"))
        .current_dir(dir)
        .env_remove("CASTLAB_OUTPUT_DIR")
        .args(args)
        .output()
        .expect("spawn castlab")
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    let v: Value = serde_json::from_slice(&o.stderr).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {}", String::from_utf8_lossy(&o.stderr)));
    v["error"].clone()
}

#[test]
fn oracle_reproduces_awake_fractions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("hetero4_network.json");
    let o = castlab(dir.path(), &["oracle", "--config", cfg.to_str().unwrap(), "--output", "o.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json_file(&dir.path().join("o.json"));
    let alpha = v["alpha"].as_array().unwrap();
    let beta = v["beta"].as_array().unwrap();
    for (k, rho) in [0.005, 0.01, 0.05, 0.1].iter().enumerate() {
        let awake = alpha[k].as_f64().unwrap() + beta[k].as_f64().unwrap();
        assert!((awake - rho / 1.0).abs() < 1e-9);
    }
}

#[test]
fn grid_oracle_reports_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("grid3x3_network.json");
    let o = castlab(dir.path(), &["oracle", "--config", cfg.to_str().unwrap(), "--output", "b.json"]);
    assert!(o.status.success());
    let v = json_file(&dir.path().join("b.json"));
    let lo = v["lower"]["throughput"].as_f64().unwrap();
    let hi = v["upper"]["throughput"].as_f64().unwrap();
    assert!((lo - 0.13).abs() < 1e-9 && (hi - 0.13).abs() < 1e-9);
}

#[test]
fn validate_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("sim_n5.json");
    let o = castlab(dir.path(), &["validate", "--config", cfg.to_str().unwrap(), "--output", "first.json"]);
    assert!(o.status.success());
    let o = castlab(dir.path(), &["validate", "--config", "first.json", "--output", "second.json"]);
    assert!(o.status.success());
    let first = std::fs::read(dir.path().join("first.json")).unwrap();
    assert_eq!(first, std::fs::read(dir.path().join("second.json")).unwrap());

    // Same results from the original and the emitted config.
    for (src, out) in [(cfg.to_str().unwrap(), "a.json"), ("first.json", "b.json")] {
        let o = castlab(dir.path(), &["simulate", "--config", src, "--duration", "100", "--output", out]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(dir.path().join("a.json")).unwrap(), std::fs::read(dir.path().join("b.json")).unwrap());
}

#[test]
fn commands_leave_config_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    std::fs::copy(fixture("sim_n5.json"), &cfg).unwrap();
    let before = std::fs::read(&cfg).unwrap();
    let c = cfg.to_str().unwrap();
    let runs: [&[&str]; 6] = [
        &["validate", "--config", c, "--output", "v.json"],
        &["oracle", "--config", c, "--output", "o.json"],
        &["gibbs", "--config", c, "--output", "g.json"],
        &["simulate", "--config", c, "--duration", "50", "--output", "s.json", "--set", "seed=3"],
        &["balance", "--config", c, "--output", "d.json"],
        &["burstiness", "--config", c, "--output", "u.csv", "--format", "csv"],
    ];
    for args in runs {
        let o = castlab(dir.path(), args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(before, std::fs::read(&cfg).unwrap());
}

#[test]
fn schema_errors_point_at_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"nodes\": [\n    {\"rho\": \"-3uW\", \"listen_cost\": \"1mW\", \"transmit_cost\": \"1mW\", \"colour\": 1}\n  ]\n}\n").unwrap();
    let o = castlab(dir.path(), &["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let err = stderr_json(&o);
    let diags = err["diagnostics"].as_array().unwrap();
    let paths: Vec<&str> = diags.iter().map(|d| d["path"].as_str().unwrap()).collect();
    assert!(paths.contains(&"/nodes/0/rho"), "{paths:?}");
    assert!(paths.contains(&"/nodes/0/colour"), "{paths:?}");
    assert!(diags.iter().all(|d| d["line"].as_u64() == Some(3)));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let syntax = dir.path().join("syntax.json");
    std::fs::write(&syntax, "{\"nodes\": [").unwrap();
    let o = castlab(dir.path(), &["validate", "--config", syntax.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["kind"], "config_syntax");

    let o = castlab(dir.path(), &["validate", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(6));

    let o = castlab(dir.path(), &["oracle", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));

    // Exact Gibbs solutions need a clique.
    let grid = fixture("grid3x3_network.json");
    let o = castlab(dir.path(), &["gibbs", "--config", grid.to_str().unwrap(), "--sigma", "0.5"]);
    assert_eq!(o.status.code(), Some(5));
    assert_eq!(stderr_json(&o)["kind"], "module");
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    std::fs::create_dir(&out).unwrap();
    let cfg = fixture("hetero4_network.json");
    let o = Command::new(env!("CARGO_BIN_EXE_castlab"))
        .current_dir(dir.path())
        .env("CASTLAB_OUTPUT_DIR", &out)
        .args(["oracle", "--config", cfg.to_str().unwrap(), "--format", "csv"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let csv = std::fs::read_to_string(out.join("oracle.csv")).unwrap();
    assert!(csv.lines().count() >= 5);
}

#[test]
fn sweep_and_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let o = castlab(
        dir.path(),
        &["sweep", "--sigma", "0.5,1", "--h", "10,100", "--replicates", "3", "--nodes", "3", "--jobs", "2", "--baseline", "panda=0.005", "--output", "sweep.csv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(csv.lines().next().unwrap().contains("panda"));

    let cfg = fixture("hetero4_network.json");
    let o = castlab(dir.path(), &["schedule", "--config", cfg.to_str().unwrap(), "--output", "sched.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json_file(&dir.path().join("sched.json"));
    assert!(v.to_string().contains("period"));
}
