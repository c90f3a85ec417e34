//! Parse an experiment file and run a short ensemble through the runner.

use mixflow::app::{cmd_run, CommonArgs};
use mixflow::config::ExperimentConfig;

const CONFIG: &str = r#"
[scenario]
name = "short_wave"
profile = { kind = "sinusoid", mean = 15.0, amplitude = 2.0, period = 8.0 }
duration = 4.0

[experiment]
seeds = 2
write_trajectories = false
write_plots = false
runs = [
  { label = "all_hdv", strategy = "all_hdv" },
  { label = "decentralized", strategy = "decentralized", estimator = "constant" },
]
"#;

fn main() {
    let cfg = ExperimentConfig::from_toml(CONFIG).expect("valid config");
    let args = CommonArgs {
        config: None,
        seed: None,
        workers: Some(1),
        out: std::env::temp_dir().join("mixflow_experiment"),
        dry_run: false,
    };
    match cmd_run(&cfg, &args) {
        Ok(report) => println!("{} runs summarized", report.runs.len()),
        Err(e) => eprintln!("failed with exit code {}: {e}", e.exit_code()),
    }
}
