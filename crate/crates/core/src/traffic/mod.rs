//! Vehicle dynamics, platoon topology and the nonlinear plant step.

mod linear;

pub use linear::{linearize, Scope, ScopeLayout, StateSpace};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Car-following parameters of a human-driven vehicle (optimal velocity model).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OvmParams {
    /// Gain on the desired-velocity error.
    pub alpha: f64,
    /// Gain on the relative velocity to the predecessor.
    pub beta: f64,
    /// Spacing below which the desired velocity is zero.
    pub s_stop: f64,
    /// Spacing above which the desired velocity saturates.
    pub s_go: f64,
    pub v_max: f64,
}

impl Default for OvmParams {
    fn default() -> Self {
        Self { alpha: 0.6, beta: 0.9, s_stop: 5.0, s_go: 35.0, v_max: 30.0 }
    }
}

impl OvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta >= 0.0) {
            return Err(config_err("OVM gains must satisfy alpha > 0, beta >= 0"));
        }
        if !(self.s_go > self.s_stop && self.v_max > 0.0) {
            return Err(config_err("OVM needs s_go > s_stop and v_max > 0"));
        }
        Ok(())
    }

    /// Desired velocity for a given spacing.
    pub fn desired_velocity(&self, s: f64) -> f64 {
        if s <= self.s_stop {
            0.0
        } else if s >= self.s_go {
            self.v_max
        } else {
            let x = std::f64::consts::PI * (s - self.s_stop) / (self.s_go - self.s_stop);
            0.5 * self.v_max * (1.0 - x.cos())
        }
    }

    /// Derivative of the desired velocity with respect to spacing.
    pub fn desired_velocity_slope(&self, s: f64) -> f64 {
        if s <= self.s_stop || s >= self.s_go {
            0.0
        } else {
            let w = std::f64::consts::PI / (self.s_go - self.s_stop);
            0.5 * self.v_max * w * (w * (s - self.s_stop)).sin()
        }
    }

    /// Acceleration command for spacing `s`, own velocity `v` and spacing rate `ds`.
    pub fn accel(&self, s: f64, v: f64, ds: f64) -> f64 {
        self.alpha * (self.desired_velocity(s) - v) + self.beta * ds
    }

    /// Equilibrium spacing at velocity `v`, found by bisection on the
    /// monotone part of the desired-velocity curve.
    pub fn equilibrium_spacing(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return self.s_stop;
        }
        if v >= self.v_max {
            return self.s_go;
        }
        let (mut lo, mut hi) = (self.s_stop, self.s_go);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.desired_velocity(mid) < v {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Linearized coefficients `(a1, a2, a3)` at equilibrium velocity `v`:
    /// `dv = a1 * ds_err - a2 * dv_err + a3 * dv_pred`.
    pub fn linear_coefficients(&self, v: f64) -> (f64, f64, f64) {
        let s = self.equilibrium_spacing(v);
        let slope = self.desired_velocity_slope(s);
        (self.alpha * slope, self.alpha + self.beta, self.beta)
    }
}

/// Platoon topology and plant limits.
///
/// Vehicles are numbered `1..=n` behind the head vehicle `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    pub n: usize,
    /// Positions of the connected vehicles, strictly increasing, 1-based.
    pub cav_positions: Vec<usize>,
    /// Car-following parameters of vehicles `1..=n` (index `i - 1`).
    /// For connected vehicles these are used only when they drive like humans.
    pub vehicle_params: Vec<OvmParams>,
    pub dt: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// Optional saturation of human-driven accelerations.
    pub hdv_accel_limits: Option<(f64, f64)>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self::homogeneous(16, vec![3, 6, 10, 13], OvmParams::default())
    }
}

impl TrafficConfig {
    pub fn homogeneous(n: usize, cav_positions: Vec<usize>, params: OvmParams) -> Self {
        Self {
            n,
            cav_positions,
            vehicle_params: vec![params; n],
            dt: 0.05,
            u_min: -5.0,
            u_max: 2.0,
            s_min: 5.0,
            s_max: 40.0,
            hdv_accel_limits: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config_err("platoon needs at least one vehicle"));
        }
        if self.vehicle_params.len() != self.n {
            return Err(config_err(format!(
                "expected {} vehicle parameter sets, got {}",
                self.n,
                self.vehicle_params.len()
            )));
        }
        if self.cav_positions.is_empty() {
            return Err(config_err("at least one connected vehicle is required"));
        }
        for w in self.cav_positions.windows(2) {
            if w[0] >= w[1] {
                return Err(config_err("connected vehicle positions must be strictly increasing"));
            }
        }
        let first = self.cav_positions[0];
        let last = *self.cav_positions.last().unwrap();
        if first == 0 || last > self.n {
            return Err(config_err(format!("connected vehicle positions must lie in 1..={}", self.n)));
        }
        if !(self.dt > 0.0) {
            return Err(config_err("time step must be positive"));
        }
        if !(self.u_min < 0.0 && self.u_max > 0.0) {
            return Err(config_err("input bounds must bracket zero"));
        }
        if !(self.s_min < self.s_max) {
            return Err(config_err("spacing bounds must satisfy s_min < s_max"));
        }
        if let Some((lo, hi)) = self.hdv_accel_limits {
            if !(lo < 0.0 && hi > 0.0) {
                return Err(config_err("human acceleration limits must bracket zero"));
            }
        }
        for p in &self.vehicle_params {
            p.validate()?;
        }
        Ok(())
    }

    /// Number of connected vehicles (and of subsystems).
    pub fn q(&self) -> usize {
        self.cav_positions.len()
    }

    pub fn is_cav(&self, vehicle: usize) -> bool {
        self.cav_positions.contains(&vehicle)
    }

    /// Human-driven vehicles following connected vehicle `i` (0-based subsystem index).
    pub fn followers(&self, i: usize) -> Vec<usize> {
        let start = self.cav_positions[i] + 1;
        let end = self.cav_positions.get(i + 1).copied().unwrap_or(self.n + 1);
        (start..end).collect()
    }

    /// Vehicles of subsystem `i`: the connected vehicle then its followers.
    pub fn subsystem_vehicles(&self, i: usize) -> Vec<usize> {
        let mut v = vec![self.cav_positions[i]];
        v.extend(self.followers(i));
        v
    }

    /// Number of followers in subsystem `i`.
    pub fn subsystem_size(&self, i: usize) -> usize {
        self.followers(i).len()
    }

    /// Human-driven vehicles ahead of the first connected vehicle.
    pub fn leading_hdvs(&self) -> Vec<usize> {
        (1..self.cav_positions[0]).collect()
    }

    pub fn params(&self, vehicle: usize) -> &OvmParams {
        &self.vehicle_params[vehicle - 1]
    }

    /// Equilibrium spacing of `vehicle` at velocity `v`.
    pub fn equilibrium_spacing(&self, vehicle: usize, v: f64) -> f64 {
        self.params(vehicle).equilibrium_spacing(v)
    }
}

/// Positions, velocities and last applied accelerations; index 0 is the head vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Accelerations realized in the step that produced this state.
    pub accel: Vec<f64>,
    pub collision: bool,
}

impl TrafficState {
    /// All vehicles at velocity `v` with their equilibrium spacings; head at position 0.
    pub fn equilibrium(config: &TrafficConfig, v: f64) -> Self {
        let mut position = vec![0.0; config.n + 1];
        for i in 1..=config.n {
            position[i] = position[i - 1] - config.equilibrium_spacing(i, v);
        }
        Self { position, velocity: vec![v; config.n + 1], accel: vec![0.0; config.n + 1], collision: false }
    }

    /// Gap between vehicle `i` and its predecessor.
    pub fn spacing(&self, i: usize) -> f64 {
        self.position[i - 1] - self.position[i]
    }

    pub fn spacings(&self) -> Vec<f64> {
        (1..self.position.len()).map(|i| self.spacing(i)).collect()
    }
}

/// Acceleration a connected vehicle would command if it drove like a human.
pub fn ovm_command(state: &TrafficState, config: &TrafficConfig, vehicle: usize) -> f64 {
    let s = state.spacing(vehicle);
    let ds = state.velocity[vehicle - 1] - state.velocity[vehicle];
    config.params(vehicle).accel(s, state.velocity[vehicle], ds)
}

/// Advance the platoon by one forward-Euler step.
///
/// `cav_inputs` holds one command per connected vehicle, saturated to the
/// input bounds. `hdv_noise` holds one additive acceleration term per vehicle
/// `1..=n`; entries of connected vehicles are ignored. Velocities are kept
/// nonnegative. A nonpositive gap after the step sets `collision`.
pub fn step_traffic(
    state: &TrafficState,
    cav_inputs: &[f64],
    head_velocity_next: f64,
    config: &TrafficConfig,
    hdv_noise: &[f64],
) -> TrafficState {
    assert_eq!(cav_inputs.len(), config.q(), "one input per connected vehicle");
    assert!(hdv_noise.is_empty() || hdv_noise.len() == config.n, "noise length must be n");
    let n = config.n;
    let dt = config.dt;
    let mut next = state.clone();
    next.position[0] = state.position[0] + dt * state.velocity[0];
    next.velocity[0] = head_velocity_next;
    next.accel[0] = (head_velocity_next - state.velocity[0]) / dt;
    let mut cav = 0;
    for i in 1..=n {
        let a = if cav < config.q() && config.cav_positions[cav] == i {
            let u = cav_inputs[cav].clamp(config.u_min, config.u_max);
            cav += 1;
            u
        } else {
            let noise = hdv_noise.get(i - 1).copied().unwrap_or(0.0);
            let a = ovm_command(state, config, i) + noise;
            match config.hdv_accel_limits {
                Some((lo, hi)) => a.clamp(lo, hi),
                None => a,
            }
        };
        let v_next = (state.velocity[i] + dt * a).max(0.0);
        next.accel[i] = (v_next - state.velocity[i]) / dt;
        next.velocity[i] = v_next;
        next.position[i] = state.position[i] + dt * state.velocity[i];
    }
    next.collision = state.collision || (1..=n).any(|i| next.spacing(i) <= 0.0);
    next
}
