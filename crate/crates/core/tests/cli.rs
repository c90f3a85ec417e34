use std::path::Path;
use std::process::{Command, Output};

fn mixflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixflow"))
        .args(args)
        .current_dir(dir)
        .env_remove("MIXFLOW_SOLVER")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn dry_run_prints_sizes_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = mixflow(&["run", "--dry-run", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("min data length 233"), "{text}");
    assert!(text.contains("6564 constraints"), "{text}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[platoon]\nn = 16\nspeed_of_light = 3\n");
    let out = mixflow(&["run", "--config", &cfg, "--dry-run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("speed_of_light"));
}

#[test]
fn unknown_backend_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mixflow"))
        .args(["run", "--dry-run"])
        .current_dir(dir.path())
        .env("MIXFLOW_SOLVER", "nonesuch")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn short_data_is_refused_with_the_required_length() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.toml", "[data]\nlength = 100\n");
    let out = mixflow(&["collect", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("227"));
}

#[test]
fn missing_excitation_exits_with_its_own_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "flat.toml",
        "[data]\nlength = 300\ninput_amplitude = 0.0\ndisturbance_amplitude = 0.0\nhdv_noise = 0.0\n",
    );
    let out = mixflow(&["collect", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn collect_is_reproducible_and_copies_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let text = "# small\n[data]\nlength = 300\nseed = 4\n";
    let cfg = write(dir.path(), "c.toml", text);
    for out_dir in ["a", "b"] {
        let out = mixflow(&["collect", "--config", &cfg, "--out", out_dir], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(std::fs::read_to_string(dir.path().join("a/config.toml")).unwrap(), text);
    for k in 1..=4 {
        let name = format!("data/subsystem_{k}.csv");
        let a = std::fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(&name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn run_writes_trajectories_metrics_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "r.toml",
        r#"
[controller]
t_ini = 10
horizon = 20
downsample_period = 6

[data]
length = 400

[scenario]
name = "sinusoid"
profile = { kind = "sinusoid", mean = 15.0, amplitude = 5.0, period = 10.0 }
duration = 1.0

[experiment]
seeds = 2
runs = [
  { label = "all_hdv", strategy = "all_hdv" },
  { label = "dec", strategy = "decentralized" },
]
"#,
    );
    let out = mixflow(&["run", "--config", &cfg, "--out", "o", "--workers", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("o");
    for f in ["config.toml", "metrics.json", "summary.csv", "runs/dec_seed0.csv", "runs/all_hdv_seed1.csv"] {
        assert!(o.join(f).exists(), "missing {f}");
    }
    assert!(std::fs::read_dir(o.join("plots")).unwrap().count() > 0);
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["runs"].as_array().unwrap().len(), 4);
}
