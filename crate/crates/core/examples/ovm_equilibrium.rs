//! Car-following model, equilibrium spacing and the linearized subsystem.

use mixflow::traffic::{linearize, step_traffic, OvmParams, Scope, TrafficConfig, TrafficState};

fn main() -> mixflow::Result<()> {
    let params = OvmParams::default();
    for v in [5.0, 10.0, 15.0, 20.0] {
        println!("v = {v:>4} m/s  ->  s* = {:.3} m", params.equilibrium_spacing(v));
    }

    let config = TrafficConfig::default();
    println!("connected vehicles at {:?}, human-driven leaders {:?}", config.cav_positions, config.leading_hdvs());
    for i in 0..config.q() {
        println!("subsystem {}: vehicles {:?}", i + 1, config.subsystem_vehicles(i));
    }

    // velocity kick on the first follower, everyone driving like a human
    let mut state = TrafficState::equilibrium(&config, 15.0);
    state.velocity[1] += 1.0;
    let noise = vec![0.0; config.n];
    let cav_inputs: Vec<f64> = config.cav_positions.iter().map(|&c| mixflow::traffic::ovm_command(&state, &config, c)).collect();
    state = step_traffic(&state, &cav_inputs, 15.0, &config, &noise);
    for _ in 0..400 {
        let u: Vec<f64> = config.cav_positions.iter().map(|&c| mixflow::traffic::ovm_command(&state, &config, c)).collect();
        state = step_traffic(&state, &u, 15.0, &config, &noise);
    }
    let peak = state.velocity.iter().map(|v| (v - 15.0).abs()).fold(0.0, f64::max);
    println!("largest velocity error after 20 s: {peak:.3} m/s");

    let model = linearize(&config, 15.0, Scope::Subsystem(0));
    println!(
        "subsystem 1 model: {} states, {} input(s), {} outputs",
        model.state_dim(),
        model.input_dim(),
        model.output_dim()
    );
    Ok(())
}
