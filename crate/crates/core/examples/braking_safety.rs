//! Emergency braking with each disturbance estimator, checked against the
//! spacing band.

use mixflow::control::ControllerSettings;
use mixflow::disturbance::EstimatorKind;
use mixflow::sim::{run_scenario, safety_events, HeadProfile, RunSpec, Scenario, Strategy};
use mixflow::traffic::TrafficConfig;

fn main() -> mixflow::Result<()> {
    let config = TrafficConfig::default();
    let scenario = Scenario::new("braking", HeadProfile::braking(), 3);
    for estimator in [EstimatorKind::Zero, EstimatorKind::Constant, EstimatorKind::TimeVarying] {
        let settings = ControllerSettings { estimator, ..Default::default() };
        let result = run_scenario(&config, &scenario, &RunSpec::new(Strategy::Decentralized, settings, 700, 3))?;
        let closest = config
            .cav_positions
            .iter()
            .flat_map(|&c| (0..result.samples()).map(move |k| (k, c)))
            .map(|(k, c)| result.spacing(k, c))
            .fold(f64::INFINITY, f64::min);
        let events = safety_events(&result, config.s_min, config.s_max);
        println!("{estimator:?}: closest connected-vehicle spacing {closest:.2} m, {} events", events.len());
    }
    Ok(())
}
