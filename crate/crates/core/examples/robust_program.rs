//! One robust control step: vertex and duality forms, conic export, and the
//! condensed solve used in closed loop.

use mixflow::control::{ControllerSettings, ControllerState, Equilibrium, RawSample};
use mixflow::data::{collect_offline_data, CollectionOptions};
use mixflow::disturbance::enumerate_vertices;
use mixflow::robust::{condense, reformulate, solve_conic, to_conic, Backend, RobustMethod, SolverSettings};
use mixflow::traffic::{Scope, TrafficConfig, TrafficState};

fn main() -> mixflow::Result<()> {
    let config = TrafficConfig::default();
    let settings = ControllerSettings { horizon: 20, downsample_period: 6, ..Default::default() };
    let opts = CollectionOptions { horizon: settings.horizon, ..Default::default() };
    let data = collect_offline_data(&config, Scope::Subsystem(0), 400, 1, &opts)?;
    let mut ctrl = ControllerState::data_driven(&config, &data, settings)?;

    // history: cruising with the vehicle ahead slowing down
    let state = TrafficState::equilibrium(&config, 15.0);
    let (velocities, spacings) = ctrl.layout.measure(&state);
    for k in 0..ctrl.settings.t_ini {
        ctrl.history.push(RawSample {
            u: vec![0.0],
            predecessor_velocity: 15.0 - 0.05 * k as f64,
            velocities: velocities.clone(),
            spacings: spacings.clone(),
        });
    }
    let eq = Equilibrium { v_star: 15.0, cav_spacing: vec![config.equilibrium_spacing(3, 15.0); config.q()] };
    let (qp, knots) = ctrl.current_qp(&eq)?;

    for method in [RobustMethod::Vertex, RobustMethod::Duality] {
        let prog = reformulate(qp.clone(), &knots, method)?;
        let conic = to_conic(&prog)?;
        let sol = solve_conic(&conic, Backend::Clarabel, &SolverSettings::default())?;
        println!(
            "{method:?}: {} variables, {} constraints, worst-case cost {:.6}, first input {:.5}",
            prog.variable_count(),
            prog.constraint_count(),
            sol.objective,
            sol.inputs(&conic)[0]
        );
        if method == RobustMethod::Duality {
            let path = std::env::temp_dir().join("mixflow_duality_program.txt");
            conic.export(&path)?;
            println!("exported to {}", path.display());
        }
    }

    let condensed = condense(&qp, &enumerate_vertices(&knots)?)?;
    let sol = condensed.solve(None, &SolverSettings::default())?;
    println!("condensed: cost {:.6}, first input {:.5}", sol.objective, sol.x[0]);
    Ok(())
}
