//! Experiment configuration files (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{ControllerSettings, SolvePath};
use crate::data::CollectionOptions;
use crate::disturbance::EstimatorKind;
use crate::error::{config_err, Result};
use crate::robust::RobustMethod;
use crate::sim::{HeadProfile, RunSpec, Scenario, Strategy};
use crate::traffic::{OvmParams, Scope, TrafficConfig};

/// Everything one invocation of the runner needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub platoon: PlatoonSection,
    pub controller: ControllerSettings,
    pub data: DataSection,
    pub scenario: ScenarioSection,
    pub experiment: ExperimentSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlatoonSection {
    pub n: usize,
    pub cav_positions: Vec<usize>,
    pub dt: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub hdv_accel_limits: Option<[f64; 2]>,
    pub ovm: OvmParams,
    /// Per-vehicle parameter changes on top of `ovm`.
    pub overrides: Vec<OvmOverride>,
}

impl Default for PlatoonSection {
    fn default() -> Self {
        let c = TrafficConfig::default();
        Self {
            n: c.n,
            cav_positions: c.cav_positions,
            dt: c.dt,
            u_min: c.u_min,
            u_max: c.u_max,
            s_min: c.s_min,
            s_max: c.s_max,
            hdv_accel_limits: None,
            ovm: OvmParams::default(),
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OvmOverride {
    pub vehicle: usize,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub s_stop: Option<f64>,
    pub s_go: Option<f64>,
    pub v_max: Option<f64>,
}

impl PlatoonSection {
    pub fn traffic_config(&self) -> Result<TrafficConfig> {
        let mut c = TrafficConfig::homogeneous(self.n, self.cav_positions.clone(), self.ovm);
        c.dt = self.dt;
        c.u_min = self.u_min;
        c.u_max = self.u_max;
        c.s_min = self.s_min;
        c.s_max = self.s_max;
        c.hdv_accel_limits = self.hdv_accel_limits.map(|[lo, hi]| (lo, hi));
        for o in &self.overrides {
            if o.vehicle == 0 || o.vehicle > self.n {
                return Err(config_err(format!("override for vehicle {} outside 1..={}", o.vehicle, self.n)));
            }
            let p = &mut c.vehicle_params[o.vehicle - 1];
            p.alpha = o.alpha.unwrap_or(p.alpha);
            p.beta = o.beta.unwrap_or(p.beta);
            p.s_stop = o.s_stop.unwrap_or(p.s_stop);
            p.s_go = o.s_go.unwrap_or(p.s_go);
            p.v_max = o.v_max.unwrap_or(p.v_max);
        }
        c.validate()?;
        Ok(c)
    }
}

/// Which scopes `collect` records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeSelection {
    #[default]
    Subsystems,
    Global,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub length: usize,
    pub seed: u64,
    pub v_star: f64,
    pub input_amplitude: f64,
    pub disturbance_amplitude: f64,
    pub hdv_noise: f64,
    pub warmup: usize,
    pub scopes: ScopeSelection,
}

impl Default for DataSection {
    fn default() -> Self {
        let o = CollectionOptions::default();
        Self {
            length: 1500,
            seed: 0,
            v_star: o.v_star,
            input_amplitude: o.input_amplitude,
            disturbance_amplitude: o.disturbance_amplitude,
            hdv_noise: o.hdv_noise,
            warmup: o.warmup,
            scopes: ScopeSelection::Subsystems,
        }
    }
}

impl DataSection {
    pub fn options(&self, controller: &ControllerSettings) -> CollectionOptions {
        CollectionOptions {
            v_star: self.v_star,
            input_amplitude: self.input_amplitude,
            disturbance_amplitude: self.disturbance_amplitude,
            hdv_noise: self.hdv_noise,
            warmup: self.warmup,
            t_ini: controller.t_ini,
            horizon: controller.horizon,
        }
    }

    pub fn scopes(&self, config: &TrafficConfig) -> Vec<Scope> {
        let subs = (0..config.q()).map(Scope::Subsystem);
        match self.scopes {
            ScopeSelection::Subsystems => subs.collect(),
            ScopeSelection::Global => vec![Scope::Global],
            ScopeSelection::Both => subs.chain(std::iter::once(Scope::Global)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub name: String,
    pub profile: HeadProfile,
    /// Defaults to the profile's natural length.
    pub duration: Option<f64>,
    pub hdv_noise: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self { name: "sinusoid".into(), profile: HeadProfile::sinusoid(), duration: None, hdv_noise: 0.1 }
    }
}

impl ScenarioSection {
    pub fn scenario(&self, seed: u64) -> Result<Scenario> {
        let profile = self.profile.resolve()?;
        let mut s = Scenario::new(&self.name, profile, seed);
        if let Some(d) = self.duration {
            if !(d >= 0.0) {
                return Err(config_err("scenario duration must be nonnegative"));
            }
            s.duration = d;
        }
        s.hdv_noise = self.hdv_noise;
        Ok(s)
    }
}

/// One controller variant of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub label: String,
    pub strategy: Strategy,
    pub estimator: Option<EstimatorKind>,
    pub method: Option<RobustMethod>,
    pub solve_path: Option<SolvePath>,
    pub data_length: Option<usize>,
    pub disturbance_delay: Option<usize>,
}

impl RunEntry {
    pub fn new(label: &str, strategy: Strategy) -> Self {
        Self {
            label: label.into(),
            strategy,
            estimator: None,
            method: None,
            solve_path: None,
            data_length: None,
            disturbance_delay: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Number of seeds; seed `k` is `base_seed + k`.
    pub seeds: usize,
    pub base_seed: u64,
    /// Label of the run the MSVE and fuel reductions are measured against.
    pub baseline: Option<String>,
    /// Largest tolerated share of fallback steps over the ensemble.
    pub max_fallback_fraction: f64,
    pub write_trajectories: bool,
    pub write_plots: bool,
    pub runs: Vec<RunEntry>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seeds: 1,
            base_seed: 0,
            baseline: Some("all_hdv".into()),
            max_fallback_fraction: 0.05,
            write_trajectories: true,
            write_plots: true,
            runs: vec![
                RunEntry::new("all_hdv", Strategy::AllHdv),
                RunEntry::new("decentralized", Strategy::Decentralized),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    /// Simulated duration of each timed run (s).
    pub duration: f64,
    pub repeats: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { duration: 5.0, repeats: 1 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.platoon.traffic_config()?;
        self.controller.validate()?;
        for run in &self.experiment.runs {
            self.settings_for(run).validate()?;
        }
        let mut labels: Vec<&str> = self.experiment.runs.iter().map(|r| r.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(config_err("run labels must be unique"));
        }
        if let Some(b) = &self.experiment.baseline {
            if !self.experiment.runs.iter().any(|r| &r.label == b) {
                return Err(config_err(format!("baseline `{b}` is not a run label")));
            }
        }
        if self.experiment.seeds == 0 {
            return Err(config_err("at least one seed is required"));
        }
        if !(0.0..=1.0).contains(&self.experiment.max_fallback_fraction) {
            return Err(config_err("max_fallback_fraction must lie in [0, 1]"));
        }
        if let Some(d) = self.scenario.duration {
            if !(d >= 0.0) {
                return Err(config_err("scenario duration must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn settings_for(&self, run: &RunEntry) -> ControllerSettings {
        let mut s = self.controller.clone();
        if let Some(e) = run.estimator {
            s.estimator = e;
        }
        if let Some(m) = run.method {
            s.method = m;
        }
        if let Some(p) = run.solve_path {
            s.solve_path = p;
        }
        if let Some(d) = run.disturbance_delay {
            s.disturbance_delay = d;
        }
        s
    }

    pub fn run_spec(&self, run: &RunEntry, seed: u64) -> RunSpec {
        let settings = self.settings_for(run);
        let length = run.data_length.unwrap_or(self.data.length);
        let mut spec = RunSpec::new(run.strategy, settings.clone(), length, data_seed(seed, self.data.seed));
        spec.collection = self.data.options(&settings);
        spec
    }
}

/// Dataset seed used for scenario seed `seed`.
pub fn data_seed(seed: u64, base: u64) -> u64 {
    seed.wrapping_mul(1000).wrapping_add(base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.platoon.traffic_config().unwrap(), TrafficConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[platoon]\nvehicles = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[controller]\nhorizon_len = 3\n").is_err());
    }

    #[test]
    fn overrides_and_run_settings() {
        let text = r#"
[platoon]
overrides = [{ vehicle = 4, alpha = 0.4 }]

[scenario]
profile = { kind = "braking", cruise = 15.0, low = 5.0, decel = 5.0, accel = 2.0, hold = 4.0, start = 1.0 }

[experiment]
baseline = "zero"
runs = [{ label = "zero", strategy = "decentralized", estimator = "zero", data_length = 700 }]
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let traffic = cfg.platoon.traffic_config().unwrap();
        assert_eq!(traffic.params(4).alpha, 0.4);
        assert_eq!(traffic.params(5).alpha, 0.6);
        let spec = cfg.run_spec(&cfg.experiment.runs[0], 3);
        assert_eq!(spec.settings.estimator, EstimatorKind::Zero);
        assert_eq!(spec.data_length, 700);
        assert_eq!(spec.data_seed, 3000);
    }

    #[test]
    fn bad_baseline_is_config_error() {
        let err = ExperimentConfig::from_toml("[experiment]\nbaseline = \"nope\"\n").unwrap_err();
        assert!(matches!(err, crate::Error::Config(_)));
    }
}
