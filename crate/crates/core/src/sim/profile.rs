use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

const BUNDLED_NEDC: &str = include_str!("../../data/nedc_scaled.csv");

/// Velocity of the head vehicle over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadProfile {
    Constant {
        velocity: f64,
    },
    /// `mean + amplitude * sin(2 pi (t - start) / period)` after `start`.
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        start: f64,
    },
    /// Cruise, brake to `low`, hold, then accelerate back.
    Braking {
        cruise: f64,
        low: f64,
        decel: f64,
        accel: f64,
        hold: f64,
        start: f64,
    },
    /// Piecewise-linear table, held constant past its ends.
    Tabulated {
        times: Vec<f64>,
        velocities: Vec<f64>,
    },
    /// Tabulated profile read from a two-column CSV; the bundled driving
    /// cycle when no file is given.
    Nedc {
        #[serde(default)]
        file: Option<PathBuf>,
    },
}

impl HeadProfile {
    pub fn sinusoid() -> Self {
        HeadProfile::Sinusoid { mean: 15.0, amplitude: 5.0, period: 10.0, start: 0.0 }
    }

    pub fn braking() -> Self {
        HeadProfile::Braking { cruise: 15.0, low: 5.0, decel: 5.0, accel: 2.0, hold: 10.0, start: 2.0 }
    }

    /// Bundled driving cycle.
    pub fn nedc() -> Self {
        parse_table(BUNDLED_NEDC).expect("bundled cycle parses")
    }

    /// Load a `time,velocity` table.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read profile `{}`: {e}", path.display())))?;
        parse_table(&text)
    }

    /// Replace file references by the loaded table.
    pub fn resolve(&self) -> Result<Self> {
        match self {
            HeadProfile::Nedc { file: None } => Ok(Self::nedc()),
            HeadProfile::Nedc { file: Some(p) } => Self::from_csv(p),
            HeadProfile::Tabulated { times, velocities } => {
                check_table(times, velocities)?;
                Ok(self.clone())
            }
            other => Ok(other.clone()),
        }
    }

    /// Natural length of the profile in seconds.
    pub fn default_duration(&self) -> f64 {
        match self {
            HeadProfile::Constant { .. } => 20.0,
            HeadProfile::Sinusoid { start, period, .. } => start + 4.0 * period,
            HeadProfile::Braking { cruise, low, decel, accel, hold, start } => {
                start + (cruise - low) / decel + hold + (cruise - low) / accel + 6.0
            }
            HeadProfile::Tabulated { times, .. } => times.last().copied().unwrap_or(0.0),
            HeadProfile::Nedc { .. } => Self::nedc().default_duration(),
        }
    }

    pub fn velocity(&self, t: f64) -> f64 {
        match self {
            HeadProfile::Constant { velocity } => *velocity,
            HeadProfile::Sinusoid { mean, amplitude, period, start } => {
                if t < *start {
                    *mean
                } else {
                    mean + amplitude * (2.0 * std::f64::consts::PI * (t - start) / period).sin()
                }
            }
            HeadProfile::Braking { cruise, low, decel, accel, hold, start } => {
                let t1 = start + (cruise - low) / decel;
                let t2 = t1 + hold;
                let t3 = t2 + (cruise - low) / accel;
                if t < *start {
                    *cruise
                } else if t < t1 {
                    cruise - decel * (t - start)
                } else if t < t2 {
                    *low
                } else if t < t3 {
                    low + accel * (t - t2)
                } else {
                    *cruise
                }
            }
            HeadProfile::Tabulated { times, velocities } => interpolate(times, velocities, t),
            HeadProfile::Nedc { .. } => Self::nedc().velocity(t),
        }
    }
}

fn check_table(times: &[f64], velocities: &[f64]) -> Result<()> {
    if times.is_empty() || times.len() != velocities.len() {
        return Err(config_err("profile table needs matching, nonempty time and velocity columns"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_err("profile times must increase"));
    }
    if velocities.iter().any(|v| *v < 0.0) {
        return Err(config_err("profile velocities must be nonnegative"));
    }
    Ok(())
}

fn parse_table(text: &str) -> Result<HeadProfile> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let (mut times, mut velocities) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| config_err("profile rows must be `time,velocity`"))
        };
        times.push(num(0)?);
        velocities.push(num(1)?);
    }
    check_table(&times, &velocities)?;
    Ok(HeadProfile::Tabulated { times, velocities })
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return values[0];
    }
    let last = times.len() - 1;
    if t >= times[last] {
        return values[last];
    }
    let k = times.partition_point(|x| *x <= t) - 1;
    let w = (t - times[k]) / (times[k + 1] - times[k]);
    values[k] + w * (values[k + 1] - values[k])
}
