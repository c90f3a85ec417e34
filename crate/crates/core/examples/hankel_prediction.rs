//! Predict a trajectory of the linearized plant from recorded data only.

use mixflow::data::{collect_linear_data, partition_hankel};
use mixflow::robust::{pseudo_inverse_predictor, IniWindow};
use mixflow::traffic::{linearize, Scope, TrafficConfig};
use nalgebra::DVector;

fn main() -> mixflow::Result<()> {
    let config = TrafficConfig::default();
    let model = linearize(&config, 15.0, Scope::Subsystem(0));
    let (t_ini, horizon) = (20, 30);

    let data = collect_linear_data(&model, 600, 7)?;
    let blocks = partition_hankel(&data, t_ini, horizon)?;
    let predictor = pseudo_inverse_predictor(blocks);
    println!("Hankel regressor rank {} of {}", predictor.rank, predictor.regressor.nrows());

    // a fresh trajectory of the model: history then future
    let mut x = DVector::from_element(model.state_dim(), 0.3);
    let (mut u_all, mut e_all, mut y_all) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..t_ini + horizon {
        let u = DVector::from_element(1, (0.3 * k as f64).sin());
        let e = 0.5 * (0.1 * k as f64).cos();
        x = model.step(&x, &u, e);
        u_all.push(u[0]);
        e_all.push(e);
        y_all.extend((&model.c * &x).iter().cloned());
    }
    let p = model.output_dim();
    let ini = IniWindow {
        u: DVector::from_row_slice(&u_all[..t_ini]),
        eps: DVector::from_row_slice(&e_all[..t_ini]),
        y: DVector::from_row_slice(&y_all[..p * t_ini]),
    };
    let u_f = DVector::from_row_slice(&u_all[t_ini..]);
    let e_f = DVector::from_row_slice(&e_all[t_ini..]);
    let y_f = DVector::from_row_slice(&y_all[p * t_ini..]);

    let predicted = predictor.predict(&predictor.regressor_rhs(&ini, &u_f, &e_f));
    println!("max prediction error over {horizon} steps: {:.2e}", (predicted - y_f).amax());
    Ok(())
}
