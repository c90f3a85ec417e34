//! Closed-loop simulation of the platoon, metrics and result export.

mod export;
mod metrics;
mod profile;

pub use export::{write_metrics_json, write_plot_data, write_result_csv, write_xy, Metrics};
pub use metrics::{
    fuel, fuel_rate, msve, msve_raw, run_flags, safety_events, safety_stats, SafetyEvent, SafetyStats, Severity,
    EMERGENCY_MARGIN, IDLE_FUEL_RATE, VIOLATION_MARGIN,
};
pub use profile::HeadProfile;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{update_equilibrium, ControllerSettings, ControllerState, RawSample};
use crate::data::{collect_offline_data, CollectionOptions, TrajectoryDataset};
use crate::error::{config_err, Result};
use crate::traffic::{ovm_command, step_traffic, Scope, TrafficConfig, TrafficState};

/// Who commands the connected vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Connected vehicles drive like humans.
    AllHdv,
    /// One data-driven controller per subsystem.
    Decentralized,
    /// One data-driven controller for the platoon.
    Centralized,
    /// One model-based controller per subsystem.
    DecentralizedModel,
    /// One model-based controller for the platoon.
    CentralizedModel,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::AllHdv => "all_hdv",
            Strategy::Decentralized => "decentralized",
            Strategy::Centralized => "centralized",
            Strategy::DecentralizedModel => "decentralized_model",
            Strategy::CentralizedModel => "centralized_model",
        }
    }

    /// Scopes that need a controller (and, for data-driven ones, a dataset).
    pub fn scopes(&self, config: &TrafficConfig) -> Vec<Scope> {
        match self {
            Strategy::AllHdv => Vec::new(),
            Strategy::Decentralized | Strategy::DecentralizedModel => (0..config.q()).map(Scope::Subsystem).collect(),
            Strategy::Centralized | Strategy::CentralizedModel => vec![Scope::Global],
        }
    }

    pub fn is_data_driven(&self) -> bool {
        matches!(self, Strategy::Decentralized | Strategy::Centralized)
    }
}

impl std::str::FromStr for Strategy {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            Strategy::AllHdv,
            Strategy::Decentralized,
            Strategy::Centralized,
            Strategy::DecentralizedModel,
            Strategy::CentralizedModel,
        ]
        .into_iter()
        .find(|k| k.label() == s)
        .ok_or_else(|| config_err(format!("unknown strategy `{s}`")))
    }
}

/// Head-vehicle profile, duration and randomness of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub profile: HeadProfile,
    pub duration: f64,
    /// Half-width of the uniform acceleration noise on human drivers.
    pub hdv_noise: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn new(name: &str, profile: HeadProfile, seed: u64) -> Self {
        let duration = profile.default_duration();
        Self { name: name.into(), profile, duration, hdv_noise: 0.1, seed }
    }

    pub fn steps(&self, dt: f64) -> usize {
        (self.duration / dt).round() as usize
    }
}

/// Controllers plus how their offline data is produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub strategy: Strategy,
    pub settings: ControllerSettings,
    pub data_length: usize,
    pub data_seed: u64,
    pub collection: CollectionOptions,
}

impl RunSpec {
    pub fn new(strategy: Strategy, settings: ControllerSettings, data_length: usize, data_seed: u64) -> Self {
        let collection = CollectionOptions { t_ini: settings.t_ini, horizon: settings.horizon, ..Default::default() };
        Self { strategy, settings, data_length, data_seed, collection }
    }

    /// Offline datasets for every scope of the strategy. Scope `k` uses seed
    /// `data_seed * 1009 + k`.
    pub fn collect(&self, config: &TrafficConfig) -> Result<Vec<TrajectoryDataset>> {
        if !self.strategy.is_data_driven() {
            return Ok(Vec::new());
        }
        self.strategy
            .scopes(config)
            .into_iter()
            .enumerate()
            .map(|(k, scope)| {
                collect_offline_data(config, scope, self.data_length, self.data_seed * 1009 + k as u64, &self.collection)
            })
            .collect()
    }

    pub fn build_controllers(&self, config: &TrafficConfig, datasets: &[TrajectoryDataset]) -> Result<Vec<ControllerState>> {
        let scopes = self.strategy.scopes(config);
        if self.strategy.is_data_driven() {
            if datasets.len() != scopes.len() {
                return Err(config_err(format!("strategy needs {} datasets, got {}", scopes.len(), datasets.len())));
            }
            scopes
                .iter()
                .zip(datasets)
                .map(|(scope, d)| {
                    if d.scope != *scope {
                        return Err(config_err(format!("dataset for {:?} given where {scope:?} was expected", d.scope)));
                    }
                    ControllerState::data_driven(config, d, self.settings.clone())
                })
                .collect()
        } else {
            scopes.into_iter().map(|s| ControllerState::model_based(config, s, self.settings.clone())).collect()
        }
    }
}

/// Trajectories and bookkeeping of one simulated run.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub strategy: Strategy,
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub time: Vec<f64>,
    /// Per sample, vehicles `0..=n`.
    pub position: Vec<Vec<f64>>,
    pub velocity: Vec<Vec<f64>>,
    /// Acceleration applied from each sample to the next; zero on the last sample.
    pub accel: Vec<Vec<f64>>,
    /// Connected-vehicle inputs per control step.
    pub cav_input: Vec<Vec<f64>>,
    /// Controller wall time per step: the slowest controller of the step.
    pub step_time: Vec<f64>,
    pub decisions: usize,
    pub fallbacks: usize,
    pub unverified: usize,
    pub collided: bool,
    pub cav_positions: Vec<usize>,
    /// Vehicles of each subsystem.
    pub subsystems: Vec<Vec<usize>>,
}

impl SimResult {
    pub fn samples(&self) -> usize {
        self.time.len()
    }

    pub fn spacing(&self, k: usize, vehicle: usize) -> f64 {
        self.position[k][vehicle - 1] - self.position[k][vehicle]
    }

    pub fn mean_step_time(&self) -> f64 {
        if self.step_time.is_empty() {
            0.0
        } else {
            self.step_time.iter().sum::<f64>() / self.step_time.len() as f64
        }
    }

    pub fn fallback_fraction(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            self.fallbacks as f64 / self.decisions as f64
        }
    }
}

/// Collect data as needed, then simulate.
pub fn run_scenario(config: &TrafficConfig, scenario: &Scenario, spec: &RunSpec) -> Result<SimResult> {
    let datasets = spec.collect(config)?;
    run_with_datasets(config, scenario, spec, &datasets)
}

/// Simulate with the given offline datasets (one per scope of the strategy).
pub fn run_with_datasets(
    config: &TrafficConfig,
    scenario: &Scenario,
    spec: &RunSpec,
    datasets: &[TrajectoryDataset],
) -> Result<SimResult> {
    config.validate()?;
    let mut controllers = spec.build_controllers(config, datasets)?;
    simulate(config, scenario, spec.strategy, &spec.settings, &mut controllers)
}

/// Run the closed loop with prepared controllers.
///
/// Before `t = 0` the platoon cruises at the initial head velocity for
/// `t_ini + delay` steps with every vehicle driving like a human, which fills
/// the controller histories. Those steps are not recorded.
pub fn simulate(
    config: &TrafficConfig,
    scenario: &Scenario,
    strategy: Strategy,
    settings: &ControllerSettings,
    controllers: &mut [ControllerState],
) -> Result<SimResult> {
    config.validate()?;
    if !(scenario.duration >= 0.0) {
        return Err(config_err("scenario duration must be nonnegative"));
    }
    let profile = scenario.profile.resolve()?;
    let dt = config.dt;
    let steps = scenario.steps(dt);
    let q = config.q();
    let delay = settings.disturbance_delay;
    let warmup = settings.t_ini + delay;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let v0 = profile.velocity(0.0);
    let mut state = TrafficState::equilibrium(config, v0);
    let mut head_history: Vec<f64> = Vec::with_capacity(warmup + steps + 1);
    // velocity of each controller's predecessor per step, for the delayed disturbance
    let mut pred_history: Vec<Vec<f64>> = vec![Vec::with_capacity(warmup + steps + 1); controllers.len()];
    let mut noise = vec![0.0; config.n];

    let mut result = SimResult {
        strategy,
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        dt,
        time: Vec::with_capacity(steps + 1),
        position: Vec::with_capacity(steps + 1),
        velocity: Vec::with_capacity(steps + 1),
        accel: Vec::with_capacity(steps + 1),
        cav_input: Vec::with_capacity(steps),
        step_time: Vec::new(),
        decisions: 0,
        fallbacks: 0,
        unverified: 0,
        collided: false,
        cav_positions: config.cav_positions.clone(),
        subsystems: (0..q).map(|i| config.subsystem_vehicles(i)).collect(),
    };

    let total = warmup + steps;
    for k in 0..=total {
        let recording = k >= warmup;
        let t = (k as f64 - warmup as f64) * dt;
        head_history.push(state.velocity[0]);
        for (c, ctrl) in controllers.iter().enumerate() {
            pred_history[c].push(state.velocity[ctrl.layout.predecessor]);
        }
        if recording {
            result.time.push(t);
            result.position.push(state.position.clone());
            result.velocity.push(state.velocity.clone());
        }
        if k == total || state.collision {
            if recording {
                result.accel.push(vec![0.0; config.n + 1]);
            }
            break;
        }
        let mut inputs: Vec<f64> = config.cav_positions.iter().map(|&c| ovm_command(&state, config, c)).collect();
        if recording && !controllers.is_empty() {
            let window = &head_history[head_history.len().saturating_sub(settings.t_ini)..];
            let eq = update_equilibrium(window, config);
            let mut slowest = 0.0f64;
            for ctrl in controllers.iter_mut() {
                let d = ctrl.decide(&eq)?;
                result.decisions += 1;
                result.fallbacks += d.fallback as usize;
                result.unverified += (!d.fallback && !d.constraints_verified) as usize;
                slowest = slowest.max(d.solve_time);
                for (slot, u) in ctrl.cav_slots().to_vec().into_iter().zip(d.input) {
                    inputs[slot] = u;
                }
            }
            result.step_time.push(slowest);
        }
        for (i, n) in noise.iter_mut().enumerate() {
            let draw: f64 = if scenario.hdv_noise > 0.0 { rng.gen_range(-scenario.hdv_noise..=scenario.hdv_noise) } else { 0.0 };
            *n = if config.is_cav(i + 1) { 0.0 } else { draw };
        }
        let head_next = profile.velocity(t + dt);
        let applied: Vec<f64> = inputs.iter().map(|u| u.clamp(config.u_min, config.u_max)).collect();
        let next = step_traffic(&state, &applied, head_next, config, &noise);
        for (c, ctrl) in controllers.iter_mut().enumerate() {
            let (velocities, spacings) = ctrl.layout.measure(&next);
            let hist = &pred_history[c];
            let pv = hist[hist.len().saturating_sub(1 + delay)];
            let u = ctrl.cav_slots().iter().map(|&s| applied[s]).collect();
            ctrl.history.push(RawSample { u, predecessor_velocity: pv, velocities, spacings });
        }
        if recording {
            result.accel.push(next.accel.clone());
            result.cav_input.push(applied);
        }
        state = next;
    }
    result.collided = state.collision;
    Ok(result)
}
