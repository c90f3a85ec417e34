//! Sinusoidal head vehicle: human drivers only versus decentralized control.

use mixflow::control::ControllerSettings;
use mixflow::sim::{msve, run_scenario, HeadProfile, RunSpec, Scenario, Strategy};
use mixflow::traffic::TrafficConfig;

fn main() -> mixflow::Result<()> {
    let config = TrafficConfig::default();
    let mut scenario = Scenario::new("sinusoid", HeadProfile::sinusoid(), 1);
    scenario.duration = 10.0;

    for strategy in [Strategy::AllHdv, Strategy::Decentralized] {
        let spec = RunSpec::new(strategy, ControllerSettings::default(), 1500, 1);
        let result = run_scenario(&config, &scenario, &spec)?;
        println!(
            "{:<14} msve {:>7.3}  mean step {:.2} ms  fallbacks {}",
            strategy.label(),
            msve(&result),
            1e3 * result.mean_step_time(),
            result.fallbacks
        );
    }
    Ok(())
}
