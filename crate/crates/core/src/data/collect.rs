use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_persistent_excitation, min_data_length, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::traffic::{ovm_command, step_traffic, Scope, StateSpace, TrafficConfig, TrafficState};

/// Excitation settings for offline data collection.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectionOptions {
    /// Equilibrium velocity the data is collected around.
    pub v_star: f64,
    /// Half-width of the uniform probe added to the connected-vehicle input.
    pub input_amplitude: f64,
    /// Half-width of the uniform disturbance on the predecessor velocity.
    pub disturbance_amplitude: f64,
    /// Half-width of the uniform acceleration noise on human drivers.
    pub hdv_noise: f64,
    /// Samples simulated and discarded before recording.
    pub warmup: usize,
    pub t_ini: usize,
    pub horizon: usize,
}

impl Default for CollectionOptions {
    fn default() -> Self {
        Self {
            v_star: 15.0,
            input_amplitude: 1.0,
            disturbance_amplitude: 1.0,
            hdv_noise: 0.1,
            warmup: 100,
            t_ini: 20,
            horizon: 50,
        }
    }
}

/// Simulate the nonlinear plant of `scope` under random excitation and
/// record `length` samples in error coordinates.
///
/// For a subsystem only its own vehicles are simulated, behind a virtual
/// predecessor whose velocity is randomized. A failed excitation check is
/// logged and stored in the dataset, not raised.
pub fn collect_offline_data(
    config: &TrafficConfig,
    scope: Scope,
    length: usize,
    seed: u64,
    opts: &CollectionOptions,
) -> Result<TrajectoryDataset> {
    config.validate()?;
    let layout = scope.layout(config);
    let window = opts.t_ini + opts.horizon;
    let required = min_data_length(layout.input_dim(), layout.state_dim(), window);
    if length < required {
        return Err(Error::InsufficientData { required, available: length });
    }
    // Plant actually simulated: the full platoon or a standalone subsystem.
    let plant = match scope {
        Scope::Global => config.clone(),
        Scope::Subsystem(_) => {
            let vehicles = &layout.vehicles;
            let mut sub = config.clone();
            sub.n = vehicles.len();
            sub.cav_positions = vec![1];
            sub.vehicle_params = vehicles.iter().map(|&v| *config.params(v)).collect();
            sub
        }
    };
    let plant_layout = match scope {
        Scope::Global => layout.clone(),
        Scope::Subsystem(_) => Scope::Subsystem(0).layout(&plant),
    };
    let v_star = opts.v_star;
    let s_star: Vec<f64> = plant_layout.cavs.iter().map(|&c| plant.equilibrium_spacing(c, v_star)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |amp: f64, rng: &mut ChaCha8Rng| if amp > 0.0 { rng.gen_range(-amp..=amp) } else { 0.0 };

    let q = plant.q();
    let p = plant_layout.output_dim();
    let mut u = DMatrix::zeros(q, length);
    let mut eps = DMatrix::zeros(1, length);
    let mut y = DMatrix::zeros(p, length);
    let mut state = TrafficState::equilibrium(&plant, v_star);
    let mut inputs = vec![0.0; q];
    let mut noise = vec![0.0; plant.n];
    for k in 0..opts.warmup + length {
        for (c, &veh) in plant.cav_positions.iter().enumerate() {
            inputs[c] = (ovm_command(&state, &plant, veh) + draw(opts.input_amplitude, &mut rng))
                .clamp(plant.u_min, plant.u_max);
        }
        for n in noise.iter_mut() {
            *n = draw(opts.hdv_noise, &mut rng);
        }
        let head_next = v_star + draw(opts.disturbance_amplitude, &mut rng);
        let eps_now = state.velocity[0] - v_star;
        let next = step_traffic(&state, &inputs, head_next, &plant, &noise);
        if k >= opts.warmup {
            let j = k - opts.warmup;
            for c in 0..q {
                u[(c, j)] = inputs[c];
            }
            eps[(0, j)] = eps_now;
            y.set_column(j, &plant_layout.output_error(&next, v_star, &s_star));
        }
        state = next;
    }
    let mut data = TrajectoryDataset::new(scope, u, eps, y, v_star)?;
    let report = check_persistent_excitation(&data.excitation_signal(), window + layout.state_dim())?;
    if !report.satisfied {
        log::warn!(
            "offline data for {:?} not persistently exciting: rank {} of {}",
            scope,
            report.rank,
            report.rows
        );
    }
    data.pe = Some(report);
    Ok(data)
}

/// Record `length` samples of the linear model driven by uniform inputs and
/// disturbances on `[-1, 1]` from a random initial state.
pub fn collect_linear_data(model: &StateSpace, length: usize, seed: u64) -> Result<TrajectoryDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, nu, ny) = (model.state_dim(), model.input_dim(), model.output_dim());
    let mut x = DVector::from_fn(nx, |_, _| rng.gen_range(-1.0..=1.0));
    let mut u = DMatrix::zeros(nu, length);
    let mut eps = DMatrix::zeros(1, length);
    let mut y = DMatrix::zeros(ny, length);
    for j in 0..length {
        let uj = DVector::from_fn(nu, |_, _| rng.gen_range(-1.0..=1.0));
        let ej: f64 = rng.gen_range(-1.0..=1.0);
        x = model.step(&x, &uj, ej);
        u.set_column(j, &uj);
        eps[(0, j)] = ej;
        y.set_column(j, &(&model.c * &x));
    }
    TrajectoryDataset::new(model.scope, u, eps, y, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsystem_collection_is_exciting() {
        let cfg = TrafficConfig::default();
        let d = collect_offline_data(&cfg, Scope::Subsystem(1), 300, 7, &CollectionOptions::default()).unwrap();
        assert_eq!(d.u.shape(), (1, 300));
        assert_eq!(d.y.shape(), (5, 300));
        let pe = d.pe.unwrap();
        assert_eq!(pe.order, 78);
        assert!(pe.satisfied);
    }

    #[test]
    fn too_short_is_rejected() {
        let cfg = TrafficConfig::default();
        let err = collect_offline_data(&cfg, Scope::Subsystem(1), 232, 7, &CollectionOptions::default());
        assert!(matches!(err, Err(Error::InsufficientData { required: 233, .. })));
    }

    #[test]
    fn no_excitation_is_reported() {
        let cfg = TrafficConfig::default();
        let opts = CollectionOptions {
            input_amplitude: 0.0,
            disturbance_amplitude: 0.0,
            hdv_noise: 0.0,
            ..Default::default()
        };
        let d = collect_offline_data(&cfg, Scope::Subsystem(0), 300, 1, &opts).unwrap();
        assert!(!d.pe.unwrap().satisfied);
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = TrafficConfig::default();
        let o = CollectionOptions::default();
        let a = collect_offline_data(&cfg, Scope::Subsystem(2), 250, 3, &o).unwrap();
        let b = collect_offline_data(&cfg, Scope::Subsystem(2), 250, 3, &o).unwrap();
        assert_eq!(a.y, b.y);
    }
}
