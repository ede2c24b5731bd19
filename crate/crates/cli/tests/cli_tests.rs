//! Command-line level checks: config validation with named keys, exit code
//! conventions, output file inventory.

use std::path::PathBuf;
use std::process::Command;

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hjlab-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hjlab")
}

#[test]
fn even_velocity_nodes_rejected_with_key_name() {
    let dir = workdir("even-n");
    let cfg = dir.join("bad.toml");
    std::fs::write(
        &cfg,
        "[grid.velocity]\nnodes_per_axis = 8\n\n[scenario]\nterminal_time = 0.1\n",
    )
    .unwrap();
    let out = Command::new(bin())
        .args(["solve", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "validation errors exit 1");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("velocity.nodes_per_axis"),
        "diagnostic names the offending key: {stderr}"
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn unknown_config_key_is_hard_error() {
    let dir = workdir("unknown-key");
    let cfg = dir.join("typo.toml");
    std::fs::write(&cfg, "[solver]\ntime_stepp = 0.05\n").unwrap();
    let out = Command::new(bin())
        .args(["solve", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("time_stepp"),
        "names the unknown key: {stderr}"
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn missing_config_file_exits_1() {
    let out = Command::new(bin())
        .args(["verify", "--config", "/nonexistent/nowhere.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_regime_sigma_combination_rejected() {
    let dir = workdir("sigma");
    let cfg = dir.join("bad-sigma.toml");
    // theorem-1 requires sigma > 1
    std::fs::write(&cfg, "[norms]\nsigma = 0.5\n").unwrap();
    let out = Command::new(bin())
        .args(["solve", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("norms.sigma"), "{stderr}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn solve_writes_inventory_and_manifest() {
    let dir = workdir("inventory");
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        r#"
[scenario]
terminal_time = 0.2

[scenario.terminal]
quadratic = 0.01

[solver]
time_step = 0.05

[output]
dir = "unused"
"#,
    )
    .unwrap();
    let out_dir = dir.join("out");
    let status = Command::new(bin())
        .args(["solve", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(&out_dir)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("run_id = "));
    assert!(manifest.contains("command = solve"));
    // every output file listed in the manifest exists and carries the run id
    let run_id = manifest
        .lines()
        .find(|l| l.starts_with("run_id = "))
        .unwrap()
        .trim_start_matches("run_id = ")
        .to_string();
    // the inventory is relative to the manifest's own directory
    for line in manifest.lines().filter(|l| l.starts_with("output_file = ")) {
        let name = line.trim_start_matches("output_file = ");
        let content = std::fs::read_to_string(out_dir.join(name)).unwrap();
        assert!(
            content.starts_with(&format!("# run_id = {run_id}")),
            "{name} carries the run id"
        );
    }
    let traj = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert!(traj
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("s,psi_p_sup,eta_p_sup,psi_p_beta,eta_p_beta,psi_p_scaled,eta_p_scaled"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn seed_override_changes_outputs() {
    let dir = workdir("seed");
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        "[scenario]\nterminal_time = 0.2\n\n[solver]\ntime_step = 0.05\n",
    )
    .unwrap();
    let run = |seed: Option<&str>, out: &str| {
        let mut cmd = Command::new(bin());
        cmd.args(["solve", "--config", cfg.to_str().unwrap(), "--out"])
            .arg(dir.join(out))
            .env("SOURCE_DATE_EPOCH", "1700000000");
        if let Some(s) = seed {
            cmd.args(["--seed", s]);
        }
        assert!(cmd.status().unwrap().success());
    };
    run(None, "a");
    run(Some("7"), "b");
    let a = std::fs::read(dir.join("a").join("trajectory.csv")).unwrap();
    let b = std::fs::read(dir.join("b").join("trajectory.csv")).unwrap();
    assert_ne!(a, b, "different seeds draw different perturbations");
    let _ = std::fs::remove_dir_all(&dir);
}
