//! Trajectory datasets, Hankel matrices and persistent-excitation checks.

mod collect;
mod io;

pub use collect::{collect_linear_data, collect_offline_data, CollectionOptions};
pub use io::{read_dataset_csv, write_dataset_csv};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::traffic::Scope;

/// Input, disturbance and output samples of one scope.
///
/// Column `j` pairs the input `u(j)` and disturbance `eps(j)` with the output
/// `y(j+1)` measured right after they were applied.
#[derive(Debug, Clone)]
pub struct TrajectoryDataset {
    pub scope: Scope,
    pub u: DMatrix<f64>,
    pub eps: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Equilibrium velocity the error coordinates refer to.
    pub v_star: f64,
    pub pe: Option<PeReport>,
}

impl TrajectoryDataset {
    pub fn new(scope: Scope, u: DMatrix<f64>, eps: DMatrix<f64>, y: DMatrix<f64>, v_star: f64) -> Result<Self> {
        let t = u.ncols();
        if eps.ncols() != t || y.ncols() != t {
            return Err(dim_err(format!(
                "channel lengths differ: u {}, eps {}, y {}",
                t,
                eps.ncols(),
                y.ncols()
            )));
        }
        if eps.nrows() != 1 {
            return Err(dim_err("disturbance must be scalar"));
        }
        Ok(Self { scope, u, eps, y, v_star, pe: None })
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.y.nrows()
    }

    /// `col(u, eps)` stacked per sample.
    pub fn excitation_signal(&self) -> DMatrix<f64> {
        linalg::vstack(&[&self.u, &self.eps])
    }
}

/// Outcome of a rank test on a depth-`order` Hankel matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeReport {
    pub order: usize,
    pub rows: usize,
    pub rank: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub satisfied: bool,
}

/// Relative singular-value threshold of the rank test.
pub const PE_RTOL: f64 = 1e-8;

/// Block Hankel matrix of depth `depth`: block `(i, j)` is sample `i + j`.
///
/// `signal` holds one sample per column; the result is
/// `(depth * dim) x (T - depth + 1)`.
pub fn build_hankel(signal: &DMatrix<f64>, depth: usize) -> Result<DMatrix<f64>> {
    let (dim, t) = signal.shape();
    if depth == 0 || depth > t {
        return Err(dim_err(format!("Hankel depth {depth} invalid for {t} samples")));
    }
    let cols = t - depth + 1;
    let mut h = DMatrix::zeros(depth * dim, cols);
    for i in 0..depth {
        h.view_mut((i * dim, 0), (dim, cols)).copy_from(&signal.columns(i, cols));
    }
    Ok(h)
}

/// Check whether `signal` is persistently exciting of the given order.
pub fn check_persistent_excitation(signal: &DMatrix<f64>, order: usize) -> Result<PeReport> {
    let h = build_hankel(signal, order)?;
    let sv = linalg::singular_values(&h);
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|s| **s > PE_RTOL * sigma_max && **s > 0.0).count();
    let rows = h.nrows();
    // A wide matrix has as many singular values as rows; a tall one cannot be full row rank.
    let sigma_min = if sv.len() == rows { *sv.last().unwrap() } else { 0.0 };
    Ok(PeReport { order, rows, rank, sigma_max, sigma_min, satisfied: rank == rows })
}

/// Shortest dataset that can be persistently exciting for `n_u` inputs, one
/// scalar disturbance, state dimension `state_dim` and window `window`.
pub fn min_data_length(n_u: usize, state_dim: usize, window: usize) -> usize {
    (n_u + 2) * (window + state_dim) - 1
}

/// Past/future partition of the data Hankel matrices.
#[derive(Debug, Clone)]
pub struct HankelBlocks {
    pub t_ini: usize,
    pub horizon: usize,
    pub u_p: DMatrix<f64>,
    pub e_p: DMatrix<f64>,
    pub y_p: DMatrix<f64>,
    pub u_f: DMatrix<f64>,
    pub e_f: DMatrix<f64>,
    pub y_f: DMatrix<f64>,
}

impl HankelBlocks {
    /// `col(U_P, E_P, Y_P, U_F, E_F)`.
    pub fn stacked_regressor(&self) -> DMatrix<f64> {
        linalg::vstack(&[&self.u_p, &self.e_p, &self.y_p, &self.u_f, &self.e_f])
    }

    /// All six blocks stacked in trajectory order.
    pub fn full(&self) -> DMatrix<f64> {
        linalg::vstack(&[&self.u_p, &self.e_p, &self.y_p, &self.u_f, &self.e_f, &self.y_f])
    }

    pub fn columns(&self) -> usize {
        self.u_p.ncols()
    }
}

/// Split depth `t_ini + horizon` Hankel matrices into past and future rows.
pub fn partition_hankel(data: &TrajectoryDataset, t_ini: usize, horizon: usize) -> Result<HankelBlocks> {
    if t_ini == 0 || horizon == 0 {
        return Err(dim_err("past and future lengths must be positive"));
    }
    let l = t_ini + horizon;
    if data.len() < l {
        return Err(Error::InsufficientData { required: l, available: data.len() });
    }
    let split = |m: &DMatrix<f64>| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let h = build_hankel(m, l)?;
        let d = m.nrows();
        Ok((h.rows(0, t_ini * d).into_owned(), h.rows(t_ini * d, horizon * d).into_owned()))
    };
    let (u_p, u_f) = split(&data.u)?;
    let (e_p, e_f) = split(&data.eps)?;
    let (y_p, y_f) = split(&data.y)?;
    Ok(HankelBlocks { t_ini, horizon, u_p, e_p, y_p, u_f, e_f, y_f })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hankel_of_ramp() {
        let s = DMatrix::from_row_slice(1, 5, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let h = build_hankel(&s, 3).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 3.0, 4.0, 3.0, 4.0, 5.0]);
        assert_eq!(h, expected);
    }

    #[test]
    fn hankel_depth_too_large() {
        let s = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        assert!(build_hankel(&s, 4).is_err());
    }

    #[test]
    fn impulse_is_not_exciting() {
        let mut v = vec![0.0; 10];
        v[0] = 1.0;
        let s = DMatrix::from_row_slice(1, 10, &v);
        let r = check_persistent_excitation(&s, 3).unwrap();
        assert!(!r.satisfied);
        assert_eq!(r.rank, 1);
    }

    #[test]
    fn minimum_lengths() {
        assert_eq!(min_data_length(4, 32, 70), 611);
        assert_eq!(min_data_length(1, 8, 70), 233);
    }

    #[test]
    fn partition_shapes() {
        let t = 40;
        let u = DMatrix::from_fn(2, t, |i, j| (i + j) as f64);
        let e = DMatrix::from_fn(1, t, |_, j| j as f64);
        let y = DMatrix::from_fn(3, t, |i, j| (i * j) as f64);
        let d = TrajectoryDataset::new(Scope::Global, u, e, y, 15.0).unwrap();
        let b = partition_hankel(&d, 4, 6).unwrap();
        assert_eq!(b.u_p.shape(), (8, 31));
        assert_eq!(b.e_f.shape(), (6, 31));
        assert_eq!(b.y_f.shape(), (18, 31));
        assert_eq!(b.stacked_regressor().nrows(), 8 + 4 + 12 + 12 + 6);
        // future block starts right after the past
        assert_eq!(b.e_f[(0, 0)], 4.0);
    }
}
