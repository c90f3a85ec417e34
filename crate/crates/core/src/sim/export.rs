//! Run summaries and file output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{fuel, msve, run_flags, safety_events, SafetyEvent};
use super::SimResult;
use crate::error::Result;

/// Scalar summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub strategy: String,
    pub scenario: String,
    pub seed: u64,
    pub msve: f64,
    /// Fuel of each subsystem's vehicles (mL).
    pub fuel_subsystems: Vec<f64>,
    /// Fuel of every follower (mL).
    pub fuel_total: f64,
    pub violation: bool,
    pub emergency: bool,
    pub collided: bool,
    pub mean_solve_time: f64,
    pub max_solve_time: f64,
    pub decisions: usize,
    pub fallbacks: usize,
    pub unverified: usize,
    pub events: Vec<SafetyEvent>,
}

impl Metrics {
    pub fn from_result(result: &SimResult, s_min: f64, s_max: f64) -> Self {
        let n = result.velocity.first().map_or(0, |v| v.len() - 1);
        let followers: Vec<usize> = (1..=n).collect();
        let (violation, emergency) = run_flags(result, s_min, s_max);
        Self {
            strategy: result.strategy.label().into(),
            scenario: result.scenario.clone(),
            seed: result.seed,
            msve: msve(result),
            fuel_subsystems: result.subsystems.iter().map(|s| fuel(result, s)).collect(),
            fuel_total: fuel(result, &followers),
            violation,
            emergency,
            collided: result.collided,
            mean_solve_time: result.mean_step_time(),
            max_solve_time: result.step_time.iter().cloned().fold(0.0, f64::max),
            decisions: result.decisions,
            fallbacks: result.fallbacks,
            unverified: result.unverified,
            events: safety_events(result, s_min, s_max),
        }
    }
}

/// One row per sample: time, then position, velocity, spacing and applied
/// acceleration of each vehicle, then the controller time of the step.
pub fn write_result_csv(result: &SimResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n = result.velocity.first().map_or(0, |v| v.len() - 1);
    let mut header = vec!["t".to_string()];
    for (name, from) in [("p", 0), ("v", 0), ("s", 1), ("u", 0)] {
        header.extend((from..=n).map(|i| format!("{name}_{i}")));
    }
    header.push("solve_time".into());
    w.write_record(&header)?;
    for k in 0..result.samples() {
        let mut row = vec![result.time[k].to_string()];
        row.extend(result.position[k].iter().map(f64::to_string));
        row.extend(result.velocity[k].iter().map(f64::to_string));
        row.extend((1..=n).map(|i| result.spacing(k, i).to_string()));
        row.extend(result.accel[k].iter().map(f64::to_string));
        row.push(result.step_time.get(k).map_or(String::new(), f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_json<T: Serialize>(metrics: &T, path: &Path) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, metrics)?;
    Ok(())
}

/// Two-column plot data (time, value) for one vehicle.
pub fn write_xy(path: &Path, xs: &[f64], ys: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (x, y) in xs.iter().zip(ys) {
        writeln!(w, "{x} {y}")?;
    }
    w.flush()?;
    Ok(())
}

/// Velocity of every vehicle and spacing of every connected vehicle as
/// `velocity_<i>.dat` and `spacing_<i>.dat` in `dir`.
pub fn write_plot_data(result: &SimResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let n = result.velocity.first().map_or(0, |v| v.len() - 1);
    for i in 0..=n {
        let v: Vec<f64> = result.velocity.iter().map(|row| row[i]).collect();
        write_xy(&dir.join(format!("velocity_{i}.dat")), &result.time, &v)?;
    }
    for &c in &result.cav_positions {
        let s: Vec<f64> = (0..result.samples()).map(|k| result.spacing(k, c)).collect();
        write_xy(&dir.join(format!("spacing_{c}.dat")), &result.time, &s)?;
    }
    Ok(())
}
