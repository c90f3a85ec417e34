use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{pinv, PINV_RTOL};
use crate::robust::{IniWindow, ModelPrediction};
use crate::traffic::StateSpace;

/// Current state from the last `t_ini` samples by least squares on the
/// initial state and forward propagation.
pub fn deadbeat_estimate(model: &StateSpace, ini: &IniWindow, t_ini: usize) -> Result<DVector<f64>> {
    let (nu, p) = (model.input_dim(), model.output_dim());
    if ini.u.len() != nu * t_ini || ini.eps.len() != t_ini || ini.y.len() != p * t_ini {
        return Err(Error::Dimension("history window does not match the model".into()));
    }
    let pred = ModelPrediction::new(model, t_ini);
    let forced = &pred.psi * &ini.u + &pred.xi * &ini.eps;
    let (obs_pinv, _) = pinv(&pred.phi, PINV_RTOL);
    let mut x = obs_pinv * (&ini.y - forced);
    for j in 0..t_ini {
        let u = ini.u.rows(j * nu, nu).into_owned();
        x = model.step(&x, &u, ini.eps[j]);
    }
    Ok(x)
}
