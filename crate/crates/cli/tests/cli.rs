use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fracsync"));
    c.env_remove(fracsync_cli::OUTPUT_ENV);
    c
}

fn run(dir: &Path, recipe: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{recipe}.toml"));
    std::fs::write(&cfg, config).unwrap();
    bin().arg(recipe).arg("--config").arg(&cfg).args(extra).output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap()
}

const EVOLVE4: &str = r#"
recipe = "evolve"
t_max = 300.0
dt_record = 1.0
h = 0.1

[chain]
N = 4
B = 0.2

[dissipators]
gamma = 0.2
kappa = 0.2
"#;

#[test]
fn ground_states_n6() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("gs");
    let out = run(tmp.path(), "ground-states", "[chain]\nN = 6\nB = 0.0\n", &["--output", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let gs = json(&out_dir.join("ground_states.json"));
    let energies = gs["energies"].as_array().unwrap();
    assert_eq!(energies.len(), 4);
    assert!(energies.iter().all(|e| e.as_f64().unwrap().abs() < 1e-10));
    let labels: Vec<(i64, i64)> = gs["labels"].as_array().unwrap().iter().map(|l| (l["S"].as_i64().unwrap(), l["Sz"].as_i64().unwrap())).collect();
    assert_eq!(labels, [(0, 0), (1, -1), (1, 0), (1, 1)]);
    let manifest = json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["recipe"], "ground-states");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn validate_reports_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let n6 = EVOLVE4.replace("N = 4", "N = 6");
    let out = run(tmp.path(), "evolve", &n6, &["--validate"]);
    assert!(out.status.success());
    let est: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(est["hilbert_dim"], 729);
    assert_eq!(est["density_entries"], 729 * 729);
    assert!(!tmp.path().join("out").exists());

    let spec = n6.replace("\"evolve\"", "\"spectrum\"") + "\n[spectrum]\ndelta_m = -1\n";
    let out = run(tmp.path(), "spectrum", &spec, &["--validate"]);
    let est: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(est["block_dim"], 69576);
}

#[test]
fn schema_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "evolve", &EVOLVE4.replace("gamma = 0.2", "gamma = -0.2"), &["--validate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "invalid-config");
    assert_eq!(err["exit_code"], 2);

    let out = run(tmp.path(), "spectrum", EVOLVE4, &[]);
    assert_eq!(out.status.code(), Some(2), "recipe mismatch");
    let out = run(tmp.path(), "evolve", &EVOLVE4.replace("t_max = 300.0", ""), &[]);
    assert_eq!(out.status.code(), Some(2), "missing t_max");
}

#[test]
fn evolve_fits_frequency_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let out = run(tmp.path(), "evolve", EVOLVE4, &["--output", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv_a = std::fs::read(a.join("evolve.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("evolve.csv")).unwrap());

    let text = String::from_utf8(csv_a).unwrap();
    let manifest = json(&a.join("manifest.json"));
    let hash = manifest["config_hash"].as_str().unwrap();
    assert!(text.lines().any(|l| l == format!("# config_hash {hash}")));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "t,trace,Sx_1,Sx_2,Sx_3,Sx_4,anti_sync_error");
    assert_eq!(manifest["outputs"][0]["rows"], 301);

    let report = json(&a.join("sync_report.json"));
    let w = report["sync"]["fitted_frequency"].as_f64().unwrap();
    assert!((w - 0.05).abs() < 0.01 * 0.05, "{w}");
    assert!((report["predicted_frequency"].as_f64().unwrap() - 0.05).abs() < 1e-12);
    assert_eq!(report["sync"]["stability"], "stable");
    assert!(report["dynamical_symmetry"]["eigen_residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gs.toml");
    std::fs::write(&cfg, "[chain]\nN = 2\n").unwrap();
    let env_dir = tmp.path().join("env_out");
    let out = bin().args(["ground-states", "--config"]).arg(&cfg).env(fracsync_cli::OUTPUT_ENV, &env_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_dir.join("manifest.json").exists());
}

#[test]
fn short_window_is_non_convergence() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("short");
    let out = run(tmp.path(), "evolve", &EVOLVE4.replace("t_max = 300.0", "t_max = 50.0"), &["--output", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"], "non-convergence");
    // artifacts and the manifest are still written
    assert!(dir.join("evolve.csv").exists() && dir.join("manifest.json").exists());
}

#[test]
fn unstable_step_is_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("positivity_every = 1\n{}", EVOLVE4.replace("h = 0.1", "h = 3.0").replace("t_max = 300.0", "t_max = 120.0"));
    let out = run(tmp.path(), "evolve", &cfg, &["--output", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_json(&out)["error"], "numerical-failure");
}

#[test]
fn disorder_sweep_stable_then_metastable() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep = EVOLVE4.replace("\"evolve\"", "\"disorder-sweep\"").replace("B = 0.2", "B = 0.2\nJmax = 0.5") + "\n[sweep]\nn_seeds = 3\n";
    let stable = |dir: &Path, cfg: &str, threads: &str| -> Vec<String> {
        let out = run(tmp.path(), "disorder-sweep", cfg, &["--output", dir.to_str().unwrap(), "--threads", threads]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let rows = json(&dir.join("sweep.json"));
        rows.as_array().unwrap().iter().map(|r| r["sync"]["stability"].as_str().unwrap().to_string()).collect()
    };
    let (one, two) = (tmp.path().join("t1"), tmp.path().join("t2"));
    assert_eq!(stable(&one, &sweep, "1"), ["stable"; 3]);
    stable(&two, &sweep, "2");
    assert_eq!(std::fs::read(one.join("sweep.csv")).unwrap(), std::fs::read(two.join("sweep.csv")).unwrap());

    let bx = sweep.replace("Jmax = 0.5", "Jmax = 0.5\nBx = 0.02");
    assert_eq!(stable(&tmp.path().join("bx"), &bx, "2"), ["metastable"; 3]);
}

#[test]
fn trajectory_and_cavity_recipes() {
    let tmp = tempfile::tempdir().unwrap();
    let traj = "seed = 3\n[circuit]\nn_qutrits = 2\nlambda = 0.05\ndt = 1.0\nsteps = 40\ntrajectories = 200\nseed = 0\nsnapshot_every = 10\n";
    let dir = tmp.path().join("traj");
    let out = run(tmp.path(), "trajectory", traj, &["--output", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&dir.join("trajectory.json"));
    assert_eq!(s["trajectories"], 200);
    assert!(s["final_trace_distance"].as_f64().unwrap() < 0.2);
    assert_eq!(json(&dir.join("manifest.json"))["seed"], 3);

    let cav = "t_max = 50.0\ndt_record = 5.0\nh = 0.05\n[cavity]\nn_qutrits = 2\nlambda = 0.1\nGamma = 2.0\n";
    let dir = tmp.path().join("cav");
    let out = run(tmp.path(), "cavity", cav, &["--output", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&dir.join("cavity.json"));
    assert!((s["effective_gamma"].as_f64().unwrap() - 0.02).abs() < 1e-15);
    assert!(s["max_trace_distance"].as_f64().unwrap() < 0.05);
}

#[test]
fn memory_estimate_within_factor_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = EVOLVE4.replace("N = 4", "N = 6").replace("t_max = 300.0", "t_max = 2.0");
    let est = run(tmp.path(), "evolve", &cfg, &["--validate"]);
    let est: Value = serde_json::from_slice(&est.stdout).unwrap();
    let dir = tmp.path().join("mem");
    let out = run(tmp.path(), "evolve", &cfg, &["--output", dir.to_str().unwrap()]);
    // two samples cannot cover two periods; the run still completes its artifacts
    assert_eq!(out.status.code(), Some(4));
    let Some(rss) = json(&dir.join("manifest.json"))["peak_rss_bytes"].as_f64() else {
        return;
    };
    let predicted = est["memory_bytes"].as_f64().unwrap();
    assert!(rss < 2.0 * predicted && predicted < 2.0 * rss, "estimate {predicted} vs peak {rss}");
}
