//! Velocity error, fuel and safety metrics of simulated runs.

use serde::{Deserialize, Serialize};

use super::SimResult;

/// Idle fuel rate in mL/s.
pub const IDLE_FUEL_RATE: f64 = 0.444;

/// Band beyond the safe spacing range that counts as a violation (m).
pub const VIOLATION_MARGIN: f64 = 1.0;
/// Band beyond the safe spacing range that counts as an emergency (m).
pub const EMERGENCY_MARGIN: f64 = 5.0;

/// `dt / (n * span) * sum of squared offsets`, where `offsets[k][i]` is the
/// velocity error of vehicle `i` at sample `k`.
pub fn msve_raw(offsets: &[Vec<f64>], dt: f64, span: f64) -> f64 {
    let n = offsets.first().map_or(0, |row| row.len());
    if n == 0 || span <= 0.0 {
        return 0.0;
    }
    let total: f64 = offsets.iter().flat_map(|row| row.iter()).map(|e| e * e).sum();
    dt / (n as f64 * span) * total
}

/// Mean squared velocity error of the followers relative to the head vehicle,
/// over the simulated steps (the final snapshot closes the interval).
pub fn msve(result: &SimResult) -> f64 {
    let steps = result.samples().saturating_sub(1);
    if steps == 0 {
        return 0.0;
    }
    let offsets: Vec<Vec<f64>> = result.velocity[..steps]
        .iter()
        .map(|v| v[1..].iter().map(|vi| vi - v[0]).collect())
        .collect();
    msve_raw(&offsets, result.dt, steps as f64 * result.dt)
}

/// Instantaneous fuel rate in mL/s.
pub fn fuel_rate(v: f64, a: f64) -> f64 {
    let r = 0.333 + 0.00108 * v * v + 1.200 * a;
    if r <= 0.0 {
        return IDLE_FUEL_RATE;
    }
    let accel_term = if a > 0.0 { 0.054 * a * a * v } else { 0.0 };
    IDLE_FUEL_RATE + 0.090 * r * v + accel_term
}

/// Fuel in mL burnt by the given vehicles over the run.
pub fn fuel(result: &SimResult, vehicles: &[usize]) -> f64 {
    let steps = result.samples().saturating_sub(1);
    (0..steps)
        .map(|k| {
            vehicles
                .iter()
                .map(|&i| fuel_rate(result.velocity[k][i], result.accel[k][i]))
                .sum::<f64>()
        })
        .sum::<f64>()
        * result.dt
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Violation,
    Emergency,
    Collision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyEvent {
    pub time: f64,
    pub vehicle: usize,
    pub spacing: f64,
    pub severity: Severity,
}

/// Every connected-vehicle spacing sample more than the violation margin
/// outside `[s_min, s_max]`, plus collisions anywhere in the platoon.
pub fn safety_events(result: &SimResult, s_min: f64, s_max: f64) -> Vec<SafetyEvent> {
    let mut events = Vec::new();
    let n = result.velocity.first().map_or(0, |v| v.len() - 1);
    for k in 0..result.samples() {
        let t = result.time[k];
        for i in 1..=n {
            let s = result.spacing(k, i);
            if s <= 0.0 {
                events.push(SafetyEvent { time: t, vehicle: i, spacing: s, severity: Severity::Collision });
                continue;
            }
            if !result.cav_positions.contains(&i) {
                continue;
            }
            let excess = (s_min - s).max(s - s_max);
            let severity = if excess > EMERGENCY_MARGIN {
                Severity::Emergency
            } else if excess > VIOLATION_MARGIN {
                Severity::Violation
            } else {
                continue;
            };
            events.push(SafetyEvent { time: t, vehicle: i, spacing: s, severity });
        }
    }
    events
}

/// Violation and emergency flags of one run.
pub fn run_flags(result: &SimResult, s_min: f64, s_max: f64) -> (bool, bool) {
    let events = safety_events(result, s_min, s_max);
    let emergency = result.collided || events.iter().any(|e| e.severity != Severity::Violation);
    (emergency || !events.is_empty(), emergency)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyStats {
    pub runs: usize,
    pub violation_rate: f64,
    pub emergency_rate: f64,
}

/// Share of runs with a violation and with an emergency.
pub fn safety_stats(results: &[SimResult], s_min: f64, s_max: f64) -> SafetyStats {
    let runs = results.len();
    if runs == 0 {
        return SafetyStats { runs, violation_rate: 0.0, emergency_rate: 0.0 };
    }
    let (mut v, mut e) = (0usize, 0usize);
    for r in results {
        let (viol, emerg) = run_flags(r, s_min, s_max);
        v += viol as usize;
        e += emerg as usize;
    }
    SafetyStats { runs, violation_rate: v as f64 / runs as f64, emergency_rate: e as f64 / runs as f64 }
}
