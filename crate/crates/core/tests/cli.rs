//! End-to-end runs of the `skelqbx` binary.

use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
tolerances = [1e-4, 1e-10]
samples = 2
seed = 7

[geometry]
shape = { kind = "starfish", amplitude = 0.25, arms = 4 }
panels = 48
order = 8

[proxy]
count = 64

[solver]
leaf_panels = 4

[sweep]
alphas = [1.5]
orders = [1, 2, 4, 8]
fit_tolerances = [1e-4, 1e-8]

[scaling]
panels = [48, 64, 80]
tolerance = 1e-6
"#;

fn skelqbx(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    Command::new(env!("CARGO_BIN_EXE_skelqbx"))
        .arg("-c")
        .arg(&cfg)
        .arg("-o")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn scratch(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("skelqbx-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn forward_error_csv_has_metadata_and_is_reproducible() {
    let dir = scratch("forward");
    let out = skelqbx(&dir, &["forward-error"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read_to_string(dir.join("out/forward_error.csv")).unwrap();
    for key in ["# study = forward_error", "# geometry", "# operator", "# alpha", "# seed = 7", "# version"] {
        assert!(first.contains(key), "missing {key} in\n{first}");
    }
    let rows = data_rows(&first);
    // 2 tolerances x (2 random + 1 zero control)
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let err: f64 = r.last().unwrap().parse().unwrap();
        if r[1] == "zero" {
            assert_eq!(err, 0.0);
        } else {
            let eps: f64 = r[0].parse().unwrap();
            assert!(err <= 100.0 * eps, "{r:?}");
        }
    }
    assert!(skelqbx(&dir, &["forward-error"]).status.success());
    let second = std::fs::read_to_string(dir.join("out/forward_error.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn seed_flag_changes_the_samples() {
    let dir = scratch("seed");
    assert!(skelqbx(&dir, &["solve-error"]).status.success());
    let a = std::fs::read_to_string(dir.join("out/solve_error.csv")).unwrap();
    assert!(skelqbx(&dir, &["--seed", "8", "solve-error"]).status.success());
    let b = std::fs::read_to_string(dir.join("out/solve_error.csv")).unwrap();
    assert!(b.contains("# seed = 8"));
    assert_ne!(data_rows(&a), data_rows(&b));
}

#[test]
fn every_study_writes_its_csv() {
    let dir = scratch("studies");
    for (cmd, file) in [
        ("ablate-weight", "ablate_weight.csv"),
        ("sweep-proxy", "sweep_proxy.csv"),
        ("estimate-q", "estimate_q.csv"),
        ("scaling", "scaling.csv"),
        ("bvp", "bvp.csv"),
        ("stats", "stats.csv"),
    ] {
        let out = skelqbx(&dir, &[cmd]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(dir.join("out").join(file)).unwrap();
        assert!(!data_rows(&text).is_empty(), "{cmd} wrote no rows");
    }
    let scaling = std::fs::read_to_string(dir.join("out/scaling.csv")).unwrap();
    assert!(scaling.contains("# slope = "));
    assert!(dir.join("out/estimate_q_fit.csv").exists());
}

#[test]
fn show_config_round_trips() {
    let dir = scratch("show");
    let out = skelqbx(&dir, &["show-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = skelqbx::config::ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.geometry.panels, 48);
}

#[test]
fn bad_config_gives_machine_readable_error() {
    let dir = scratch("bad");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "[proxy]\nalpha = 0.5\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_skelqbx")).arg("-c").arg(&cfg).arg("forward-error").output().unwrap();
    assert_eq!(out.status.code(), Some(11));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error code=11 kind=config message=\""), "{err}");

    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_skelqbx")).arg("-c").arg(&cfg).arg("show-config").output().unwrap();
    assert_eq!(out.status.code(), Some(11));
}

#[test]
fn thread_override_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_skelqbx")).env("SKELQBX_THREADS", "zero").arg("show-config").output().unwrap();
    assert_eq!(out.status.code(), Some(11));
    let out = Command::new(env!("CARGO_BIN_EXE_skelqbx")).env("SKELQBX_THREADS", "2").arg("show-config").output().unwrap();
    assert!(out.status.success());
}
