//! Disturbance estimation over the prediction horizon.
//!
//! An estimator turns the recent disturbance history into a per-step box
//! `[lower, upper]` over the horizon. The box is then reduced to a few knots
//! with linear interpolation in between, and the knot box is enumerated by
//! its vertices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, dim_err, Error, Result};

/// Largest number of free knots accepted by vertex enumeration.
pub const MAX_VERTEX_KNOTS: usize = 20;

/// How the future disturbance set is formed from past samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Assume the predecessor keeps the equilibrium velocity.
    Zero,
    /// Hold the latest value with the spread seen in the history.
    Constant,
    /// Extrapolate the latest acceleration with the spread seen in the history.
    TimeVarying,
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "constant" => Ok(Self::Constant),
            "time_varying" | "tv" => Ok(Self::TimeVarying),
            _ => Err(config_err(format!("unknown estimator `{s}`"))),
        }
    }
}

/// Elementwise interval `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl DisturbanceBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(dim_err("box bounds differ in length"));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
            return Err(dim_err("box lower bound exceeds upper bound"));
        }
        Ok(Self { lower, upper })
    }

    pub fn point(v: DVector<f64>) -> Self {
        Self { lower: v.clone(), upper: v }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        v.len() == self.len()
            && (0..v.len()).all(|i| v[i] >= self.lower[i] - tol && v[i] <= self.upper[i] + tol)
    }

    /// Indices whose interval has positive width.
    pub fn free_coordinates(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let scale = 1.0f64.max(self.lower[i].abs()).max(self.upper[i].abs());
                self.upper[i] - self.lower[i] > 1e-12 * scale
            })
            .collect()
    }
}

/// Per-step disturbance box over `horizon` steps from the history `eps_ini`.
pub fn estimate_disturbance(kind: EstimatorKind, eps_ini: &[f64], horizon: usize, dt: f64) -> DisturbanceBox {
    let n = horizon;
    match kind {
        EstimatorKind::Zero => DisturbanceBox::point(DVector::zeros(n)),
        EstimatorKind::Constant => {
            let Some(&cur) = eps_ini.last() else {
                return DisturbanceBox::point(DVector::zeros(n));
            };
            let (lo, hi) = spread(eps_ini);
            DisturbanceBox {
                lower: DVector::from_element(n, cur + lo),
                upper: DVector::from_element(n, cur + hi),
            }
        }
        EstimatorKind::TimeVarying => {
            let Some(&cur) = eps_ini.last() else {
                return DisturbanceBox::point(DVector::zeros(n));
            };
            let accel: Vec<f64> = eps_ini.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
            let a_cur = accel.last().copied().unwrap_or(0.0);
            let (lo, hi) = spread(&accel);
            let ramp = |slope: f64| DVector::from_fn(n, |k, _| cur + slope * (k + 1) as f64 * dt);
            DisturbanceBox { lower: ramp(a_cur + lo), upper: ramp(a_cur + hi) }
        }
    }
}

/// `(min - mean, max - mean)` of a sample; zero for an empty one.
fn spread(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ((min - mean).min(0.0), (max - mean).max(0.0))
}

/// Linear interpolation from a few knots to the full horizon.
///
/// Knots sit at steps `0, period, 2 period, ...` and at the last step; the
/// final segment is shorter when `period` does not divide the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Downsampling {
    pub horizon: usize,
    pub period: usize,
    /// 0-based horizon steps of the knots.
    pub knots: Vec<usize>,
    /// `horizon x knots.len()` interpolation matrix.
    pub matrix: DMatrix<f64>,
}

impl Downsampling {
    pub fn new(horizon: usize, period: usize) -> Result<Self> {
        if horizon < 3 || period == 0 || period > horizon - 2 {
            return Err(config_err(format!(
                "down-sampling period must lie in 1..={} for horizon {horizon}",
                horizon.saturating_sub(2)
            )));
        }
        let full = (horizon - 2) / period;
        let n_knots = full + 2;
        let mut knots: Vec<usize> = (0..=full).map(|j| j * period).collect();
        knots.push(horizon - 1);
        let mut m = DMatrix::zeros(horizon, n_knots);
        for k in 0..horizon {
            if k < full * period {
                let seg = k / period;
                let w = (k % period) as f64 / period as f64;
                m[(k, seg)] += 1.0 - w;
                m[(k, seg + 1)] += w;
            } else {
                let len = (horizon - 1 - full * period) as f64;
                let w = (k - full * period) as f64 / len;
                m[(k, full)] += 1.0 - w;
                m[(k, full + 1)] += w;
            }
        }
        Ok(Self { horizon, period, knots, matrix: m })
    }

    pub fn knot_count(&self) -> usize {
        self.knots.len()
    }

    /// Full-horizon sequence from knot values.
    pub fn expand(&self, knot_values: &DVector<f64>) -> DVector<f64> {
        &self.matrix * knot_values
    }

    /// Restrict a full-horizon box to the knots.
    pub fn reduce_box(&self, b: &DisturbanceBox) -> Result<DisturbanceBox> {
        if b.len() != self.horizon {
            return Err(dim_err(format!("box has {} steps, expected {}", b.len(), self.horizon)));
        }
        let pick = |v: &DVector<f64>| DVector::from_iterator(self.knots.len(), self.knots.iter().map(|&k| v[k]));
        Ok(DisturbanceBox { lower: pick(&b.lower), upper: pick(&b.upper) })
    }
}

/// All vertices of a box. Zero-width coordinates are pinned, so a box with
/// `d` free coordinates has `2^d` vertices. Bit `j` of the vertex index
/// selects the upper bound of the `j`-th free coordinate.
pub fn enumerate_vertices(b: &DisturbanceBox) -> Result<Vec<DVector<f64>>> {
    let free = b.free_coordinates();
    if free.len() > MAX_VERTEX_KNOTS {
        return Err(Error::TooManyVertices(free.len(), MAX_VERTEX_KNOTS));
    }
    let count = 1usize << free.len();
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let mut v = b.lower.clone();
        for (bit, &i) in free.iter().enumerate() {
            if (k >> bit) & 1 == 1 {
                v[i] = b.upper[i];
            }
        }
        out.push(v);
    }
    Ok(out)
}
