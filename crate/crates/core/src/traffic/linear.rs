use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{TrafficConfig, TrafficState};

/// Which part of the platoon a model or controller covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    /// Every vehicle behind the head; disturbance is the head velocity error.
    Global,
    /// One connected vehicle and its human-driven followers (0-based index).
    /// Disturbance is the velocity error of the vehicle directly ahead.
    Subsystem(usize),
}

/// Vehicle bookkeeping for a scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScopeLayout {
    /// Covered vehicles in platoon order.
    pub vehicles: Vec<usize>,
    /// Connected vehicles among `vehicles`.
    pub cavs: Vec<usize>,
    /// Vehicle whose velocity error is the disturbance.
    pub predecessor: usize,
}

impl ScopeLayout {
    pub fn state_dim(&self) -> usize {
        2 * self.vehicles.len()
    }

    pub fn input_dim(&self) -> usize {
        self.cavs.len()
    }

    /// Velocity errors of every covered vehicle followed by connected-vehicle spacing errors.
    pub fn output_dim(&self) -> usize {
        self.vehicles.len() + self.cavs.len()
    }

    /// Raw output sample: velocities then connected-vehicle spacings.
    pub fn measure(&self, state: &TrafficState) -> (Vec<f64>, Vec<f64>) {
        let v = self.vehicles.iter().map(|&i| state.velocity[i]).collect();
        let s = self.cavs.iter().map(|&i| state.spacing(i)).collect();
        (v, s)
    }

    /// Output in error coordinates about `(v_star, s_star per cav)`.
    pub fn output_error(&self, state: &TrafficState, v_star: f64, cav_s_star: &[f64]) -> DVector<f64> {
        let (v, s) = self.measure(state);
        let mut y = DVector::zeros(self.output_dim());
        for (k, vk) in v.iter().enumerate() {
            y[k] = vk - v_star;
        }
        for (k, sk) in s.iter().enumerate() {
            y[v.len() + k] = sk - cav_s_star[k];
        }
        y
    }

    /// State `[s_err, v_err]` per covered vehicle about the velocity `v_star`.
    pub fn state_error(&self, state: &TrafficState, config: &TrafficConfig, v_star: f64) -> DVector<f64> {
        let mut x = DVector::zeros(self.state_dim());
        for (k, &i) in self.vehicles.iter().enumerate() {
            x[2 * k] = state.spacing(i) - config.equilibrium_spacing(i, v_star);
            x[2 * k + 1] = state.velocity[i] - v_star;
        }
        x
    }
}

impl Scope {
    pub fn layout(&self, config: &TrafficConfig) -> ScopeLayout {
        match *self {
            Scope::Global => ScopeLayout {
                vehicles: (1..=config.n).collect(),
                cavs: config.cav_positions.clone(),
                predecessor: 0,
            },
            Scope::Subsystem(i) => {
                let vehicles = config.subsystem_vehicles(i);
                let lead = vehicles[0];
                ScopeLayout { vehicles, cavs: vec![lead], predecessor: lead - 1 }
            }
        }
    }
}

/// Discrete-time error dynamics `x+ = A x + B u + H eps`, `y = C x`.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub dt: f64,
    pub scope: Scope,
}

impl StateSpace {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, eps: f64) -> DVector<f64> {
        &self.a * x + &self.b * u + self.h.column(0) * eps
    }
}

/// Linearize the platoon about the uniform equilibrium at `v_star` and
/// discretize with forward Euler.
pub fn linearize(config: &TrafficConfig, v_star: f64, scope: Scope) -> StateSpace {
    let layout = scope.layout(config);
    let nv = layout.vehicles.len();
    let nx = 2 * nv;
    let dt = config.dt;
    let mut ac = DMatrix::zeros(nx, nx);
    let mut bc = DMatrix::zeros(nx, layout.cavs.len());
    let mut hc = DMatrix::zeros(nx, 1);
    for (k, &veh) in layout.vehicles.iter().enumerate() {
        let (si, vi) = (2 * k, 2 * k + 1);
        // spacing rate: predecessor velocity minus own velocity
        ac[(si, vi)] = -1.0;
        if k == 0 {
            hc[(si, 0)] = 1.0;
        } else {
            ac[(si, vi - 2)] = 1.0;
        }
        if let Some(c) = layout.cavs.iter().position(|&cv| cv == veh) {
            bc[(vi, c)] = 1.0;
        } else {
            let (a1, a2, a3) = config.params(veh).linear_coefficients(v_star);
            ac[(vi, si)] = a1;
            ac[(vi, vi)] = -a2;
            if k == 0 {
                hc[(vi, 0)] = a3;
            } else {
                ac[(vi, vi - 2)] = a3;
            }
        }
    }
    let mut c = DMatrix::zeros(layout.output_dim(), nx);
    for k in 0..nv {
        c[(k, 2 * k + 1)] = 1.0;
    }
    for (j, cav) in layout.cavs.iter().enumerate() {
        let k = layout.vehicles.iter().position(|v| v == cav).unwrap();
        c[(nv + j, 2 * k)] = 1.0;
    }
    StateSpace {
        a: DMatrix::identity(nx, nx) + ac * dt,
        b: bc * dt,
        h: hc * dt,
        c,
        dt,
        scope,
    }
}
