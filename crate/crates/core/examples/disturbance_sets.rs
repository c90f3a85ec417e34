//! Bounds on the future velocity error of the vehicle ahead, compressed to a
//! few knots.

use mixflow::disturbance::{enumerate_vertices, estimate_disturbance, Downsampling, EstimatorKind};

fn main() -> mixflow::Result<()> {
    let dt = 0.05;
    // the vehicle ahead has been braking gently for the last second
    let history: Vec<f64> = (0..20).map(|k| -0.02 * k as f64 + 0.01 * (k % 3) as f64).collect();
    let horizon = 50;

    for kind in [EstimatorKind::Zero, EstimatorKind::Constant, EstimatorKind::TimeVarying] {
        let full = estimate_disturbance(kind, &history, horizon, dt);
        let ds = Downsampling::new(horizon, 12)?;
        let knots = ds.reduce_box(&full)?;
        let vertices = enumerate_vertices(&knots)?;
        println!(
            "{kind:?}: last step in [{:.3}, {:.3}], {} knots, {} vertices",
            full.lower[horizon - 1],
            full.upper[horizon - 1],
            knots.len(),
            vertices.len()
        );
    }

    let ds = Downsampling::new(horizon, 12)?;
    println!("knot steps {:?}", ds.knots);
    Ok(())
}
