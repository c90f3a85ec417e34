//! Fuel and velocity-error metrics of a run, written as CSV and JSON.

use mixflow::control::ControllerSettings;
use mixflow::sim::{fuel_rate, run_scenario, write_metrics_json, write_result_csv, HeadProfile, Metrics, RunSpec, Scenario, Strategy};
use mixflow::traffic::TrafficConfig;

fn main() -> mixflow::Result<()> {
    println!("idle {:.4} mL/s, cruise at 15 m/s {:.4} mL/s", fuel_rate(0.0, 0.0), fuel_rate(15.0, 0.0));

    let config = TrafficConfig::default();
    let mut scenario = Scenario::new("nedc", HeadProfile::nedc(), 0);
    scenario.duration = 30.0;
    let spec = RunSpec::new(Strategy::AllHdv, ControllerSettings::default(), 1500, 0);
    let result = run_scenario(&config, &scenario, &spec)?;
    let metrics = Metrics::from_result(&result, config.s_min, config.s_max);
    println!("msve {:.3}, fuel {:.1} mL, per subsystem {:?}", metrics.msve, metrics.fuel_total, metrics.fuel_subsystems);

    let dir = std::env::temp_dir().join("mixflow_example");
    std::fs::create_dir_all(&dir)?;
    write_result_csv(&result, &dir.join("run.csv"))?;
    write_metrics_json(&metrics, &dir.join("metrics.json"))?;
    println!("wrote {}", dir.display());
    Ok(())
}
