use mixflow::control::ControllerSettings;
use mixflow::sim::{
    fuel, msve, run_scenario, safety_events, write_metrics_json, write_result_csv, HeadProfile, Metrics, RunSpec,
    Scenario, Severity, SimResult, Strategy,
};
use mixflow::traffic::TrafficConfig;

fn small_settings() -> ControllerSettings {
    ControllerSettings { t_ini: 10, horizon: 20, downsample_period: 6, ..Default::default() }
}

fn short_run(strategy: Strategy, profile: HeadProfile, duration: f64, seed: u64) -> SimResult {
    let config = TrafficConfig::default();
    let mut scenario = Scenario::new("test", profile, seed);
    scenario.duration = duration;
    run_scenario(&config, &scenario, &RunSpec::new(strategy, small_settings(), 600, seed)).unwrap()
}

#[test]
fn same_seed_same_result() {
    let a = short_run(Strategy::Decentralized, HeadProfile::sinusoid(), 3.0, 5);
    let b = short_run(Strategy::Decentralized, HeadProfile::sinusoid(), 3.0, 5);
    assert_eq!(a.position, b.position);
    assert_eq!(a.velocity, b.velocity);
    assert_eq!(a.cav_input, b.cav_input);
    let c = short_run(Strategy::Decentralized, HeadProfile::sinusoid(), 3.0, 6);
    assert_ne!(a.velocity, c.velocity);
}

#[test]
fn zero_duration_records_the_initial_snapshot_only() {
    let r = short_run(Strategy::AllHdv, HeadProfile::sinusoid(), 0.0, 1);
    assert_eq!(r.samples(), 1);
    assert_eq!(r.time, vec![0.0]);
    assert_eq!(msve(&r), 0.0);
    assert_eq!(fuel(&r, &[1, 2, 3]), 0.0);
}

#[test]
fn quiet_platoon_stays_at_equilibrium() {
    let config = TrafficConfig::default();
    let mut scenario = Scenario::new("cruise", HeadProfile::Constant { velocity: 15.0 }, 0);
    scenario.duration = 5.0;
    scenario.hdv_noise = 0.0;
    let r = run_scenario(&config, &scenario, &RunSpec::new(Strategy::AllHdv, small_settings(), 600, 0)).unwrap();
    let s_star = config.equilibrium_spacing(1, 15.0);
    for k in 0..r.samples() {
        for i in 1..=config.n {
            assert!((r.velocity[k][i] - 15.0).abs() < 1e-9);
            assert!((r.spacing(k, i) - s_star).abs() < 1e-9);
        }
    }
    assert!(msve(&r) < 1e-20);
}

#[test]
fn fuel_is_at_least_the_idle_rate() {
    let r = short_run(Strategy::Decentralized, HeadProfile::braking(), 6.0, 2);
    let vehicles: Vec<usize> = (1..=16).collect();
    let idle = 0.444 * r.dt * ((r.samples() - 1) * vehicles.len()) as f64;
    assert!(fuel(&r, &vehicles) >= idle);
}

#[test]
fn every_out_of_band_spacing_is_logged() {
    // a tight band forces many events
    let r = short_run(Strategy::AllHdv, HeadProfile::braking(), 8.0, 4);
    let (s_min, s_max) = (19.5, 20.5);
    let events = safety_events(&r, s_min, s_max);
    let mut expected = 0;
    for k in 0..r.samples() {
        for &c in &r.cav_positions {
            let s = r.position[k][c - 1] - r.position[k][c];
            if s < s_min - 1.0 || s > s_max + 1.0 {
                expected += 1;
                assert!(events.iter().any(|e| e.vehicle == c && e.time == r.time[k]), "missing event at sample {k}");
            }
        }
    }
    assert!(expected > 0);
    assert_eq!(events.iter().filter(|e| e.severity != Severity::Collision).count(), expected);
}

#[test]
fn exports_have_one_row_per_sample() {
    let r = short_run(Strategy::Decentralized, HeadProfile::sinusoid(), 1.0, 3);
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("run.csv");
    write_result_csv(&r, &csv_path).unwrap();
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let header = reader.headers().unwrap().clone();
    // t, 17 positions, 17 velocities, 16 spacings, 17 inputs, solve time
    assert_eq!(header.len(), 1 + 17 + 17 + 16 + 17 + 1);
    assert_eq!(reader.records().count(), r.samples());

    let json_path = dir.path().join("metrics.json");
    let config = TrafficConfig::default();
    write_metrics_json(&Metrics::from_result(&r, config.s_min, config.s_max), &json_path).unwrap();
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json_path).unwrap()).unwrap();
    assert!((value["msve"].as_f64().unwrap() - msve(&r)).abs() < 1e-12);
}
