use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::HankelBlocks;
use crate::disturbance::Downsampling;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, PINV_RTOL};
use crate::traffic::StateSpace;

/// Output and input weights plus regularization.
#[derive(Debug, Clone)]
pub struct ControllerWeights {
    /// Output weight over the stacked horizon, `p N x p N`.
    pub q: DMatrix<f64>,
    /// Input weight over the stacked horizon, `n_u N x n_u N`.
    pub r: DMatrix<f64>,
    pub lambda_g: f64,
    pub lambda_y: f64,
}

impl ControllerWeights {
    /// Unit weight on velocity errors, 0.5 on spacing errors, 0.1 on inputs,
    /// `lambda_g = 10`, `lambda_y = 1e4`.
    pub fn standard(n_velocity: usize, n_spacing: usize, n_u: usize, horizon: usize) -> Self {
        let mut per_step = vec![1.0; n_velocity];
        per_step.extend(std::iter::repeat(0.5).take(n_spacing));
        Self::diagonal(&per_step, 0.1, n_u, horizon, 10.0, 1e4)
    }

    pub fn diagonal(per_step: &[f64], r: f64, n_u: usize, horizon: usize, lambda_g: f64, lambda_y: f64) -> Self {
        let step = DMatrix::from_diagonal(&DVector::from_column_slice(per_step));
        Self {
            q: linalg::kron(&DMatrix::identity(horizon, horizon), &step),
            r: DMatrix::identity(n_u * horizon, n_u * horizon) * r,
            lambda_g,
            lambda_y,
        }
    }

    pub fn validate(&self, n_outputs: usize, n_inputs: usize) -> Result<()> {
        if self.q.shape() != (n_outputs, n_outputs) || self.r.shape() != (n_inputs, n_inputs) {
            return Err(dim_err(format!(
                "weights are {:?} / {:?}, expected {n_outputs} / {n_inputs} square",
                self.q.shape(),
                self.r.shape()
            )));
        }
        if linalg::min_eigenvalue(&self.q) < -1e-12 * self.q.norm() {
            return Err(Error::Config("output weight must be positive semidefinite".into()));
        }
        if linalg::min_eigenvalue(&self.r) <= 0.0 {
            return Err(Error::Config("input weight must be positive definite".into()));
        }
        if !(self.lambda_g >= 0.0 && self.lambda_y > 0.0) {
            return Err(Error::Config("regularization weights must satisfy lambda_g >= 0, lambda_y > 0".into()));
        }
        Ok(())
    }
}

/// Data-driven output predictor `y_f = Y_F H^+ b`.
#[derive(Debug, Clone)]
pub struct HankelPredictor {
    pub blocks: HankelBlocks,
    /// `col(U_P, E_P, Y_P, U_F, E_F)`.
    pub regressor: DMatrix<f64>,
    pub pinv: DMatrix<f64>,
    pub rank: usize,
    /// `Y_F H^+`.
    pub output_map: DMatrix<f64>,
}

impl HankelPredictor {
    pub fn new(blocks: HankelBlocks) -> Self {
        let regressor = blocks.stacked_regressor();
        let (pinv, rank) = linalg::pinv(&regressor, PINV_RTOL);
        if rank < regressor.nrows() {
            log::info!("Hankel regressor has rank {} of {} rows", rank, regressor.nrows());
        }
        let output_map = &blocks.y_f * &pinv;
        Self { blocks, regressor, pinv, rank, output_map }
    }

    pub fn t_ini(&self) -> usize {
        self.blocks.t_ini
    }

    pub fn horizon(&self) -> usize {
        self.blocks.horizon
    }

    pub fn input_dim(&self) -> usize {
        self.blocks.u_p.nrows() / self.t_ini()
    }

    pub fn output_dim(&self) -> usize {
        self.blocks.y_p.nrows() / self.t_ini()
    }

    pub fn predict(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.output_map * b
    }

    /// Assemble `b = col(u_ini, eps_ini, y_ini, u, eps)`.
    pub fn regressor_rhs(&self, ini: &IniWindow, u: &DVector<f64>, eps: &DVector<f64>) -> DVector<f64> {
        linalg::vcat(&[&ini.u, &ini.eps, &ini.y, u, eps])
    }
}

/// Build the predictor from partitioned Hankel blocks.
pub fn pseudo_inverse_predictor(blocks: HankelBlocks) -> HankelPredictor {
    HankelPredictor::new(blocks)
}

/// Most recent `T_ini` samples in error coordinates, stacked per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct IniWindow {
    pub u: DVector<f64>,
    pub eps: DVector<f64>,
    pub y: DVector<f64>,
}

/// Sizes of the decision vector `x = col(u, sigma_y, eps_knots)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    pub n_u: usize,
    pub n_sigma: usize,
    pub n_eps: usize,
}

impl VariableLayout {
    pub fn total(&self) -> usize {
        self.n_u + self.n_sigma + self.n_eps
    }

    /// Length of the part the controller decides on, `col(u, sigma_y)`.
    pub fn decision(&self) -> usize {
        self.n_u + self.n_sigma
    }
}

/// Quadratic program in the decision vector `x = col(u, sigma_y, eps_knots)`:
///
/// cost `x' M x + d' x + c0`, spacing errors `P x + c` kept within
/// `[spacing_lower, spacing_upper]`, inputs within `[u_min, u_max]`.
#[derive(Debug, Clone)]
pub struct RobustQp {
    pub layout: VariableLayout,
    pub m: DMatrix<f64>,
    pub d: DVector<f64>,
    pub c0: f64,
    pub spacing_map: DMatrix<f64>,
    pub spacing_offset: DVector<f64>,
    pub spacing_lower: DVector<f64>,
    pub spacing_upper: DVector<f64>,
    pub u_min: f64,
    pub u_max: f64,
}

impl RobustQp {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.m * x)) + self.d.dot(x) + self.c0
    }

    pub fn spacing(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.spacing_map * x + &self.spacing_offset
    }

    /// Join decision variables and disturbance knots.
    pub fn join(&self, xd: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        linalg::vcat(&[xd, w])
    }

    pub fn spacing_rows(&self) -> usize {
        self.spacing_map.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.layout.total();
        if self.m.shape() != (n, n) || self.d.len() != n || self.spacing_map.ncols() != n {
            return Err(dim_err("robust QP blocks disagree with the variable layout"));
        }
        let ns = self.spacing_map.nrows();
        if self.spacing_offset.len() != ns || self.spacing_lower.len() != ns || self.spacing_upper.len() != ns {
            return Err(dim_err("spacing rows disagree"));
        }
        Ok(())
    }
}

/// Which entries of a per-step output are spacing errors, with their bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacingSpec {
    pub outputs: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SpacingSpec {
    fn selector(&self, p: usize, horizon: usize) -> DMatrix<f64> {
        let ns = self.outputs.len();
        let mut g = DMatrix::zeros(ns * horizon, p * horizon);
        for l in 0..horizon {
            for (j, &o) in self.outputs.iter().enumerate() {
                g[(l * ns + j, l * p + o)] = 1.0;
            }
        }
        g
    }

    fn expand(&self, v: &[f64], horizon: usize) -> DVector<f64> {
        DVector::from_iterator(v.len() * horizon, (0..horizon).flat_map(|_| v.iter().cloned()))
    }
}

/// The matrices of the data-driven robust QP that do not depend on the
/// measured history, so they can be reused at every control step.
#[derive(Debug, Clone)]
pub struct DeepcQpTemplate {
    pub layout: VariableLayout,
    pub f1: DMatrix<f64>,
    pub f2: DMatrix<f64>,
    pub f3: DMatrix<f64>,
    pub s1: DMatrix<f64>,
    pub s2: DMatrix<f64>,
    pub m: DMatrix<f64>,
    /// `2 F3' (S1 + lambda_g S2)`.
    pub linear_map: DMatrix<f64>,
    /// `S1 + lambda_g S2`.
    pub constant_map: DMatrix<f64>,
    /// Spacing rows of `Y_F H^+`.
    pub spacing_output_map: DMatrix<f64>,
    pub spacing_map: DMatrix<f64>,
    pub spacing: SpacingSpec,
    pub horizon: usize,
    /// Rows of `H` taken by the history part of `b`.
    pub ini_rows: usize,
}

impl DeepcQpTemplate {
    pub fn new(
        predictor: &HankelPredictor,
        weights: &ControllerWeights,
        downsampling: &Downsampling,
        spacing: SpacingSpec,
    ) -> Result<Self> {
        let (t_ini, n) = (predictor.t_ini(), predictor.horizon());
        let (n_u, p) = (predictor.input_dim(), predictor.output_dim());
        if downsampling.horizon != n {
            return Err(dim_err("down-sampling horizon differs from the prediction horizon"));
        }
        weights.validate(p * n, n_u * n)?;
        if spacing.outputs.iter().any(|&o| o >= p) {
            return Err(dim_err("spacing output index out of range"));
        }
        let layout = VariableLayout { n_u: n_u * n, n_sigma: p * t_ini, n_eps: downsampling.knot_count() };
        let nx = layout.total();
        let rows = predictor.regressor.nrows();
        let ini_rows = (n_u + 1 + p) * t_ini;
        let mut f1 = DMatrix::zeros(layout.n_u, nx);
        f1.view_mut((0, 0), (layout.n_u, layout.n_u)).fill_with_identity();
        let mut f2 = DMatrix::zeros(layout.n_sigma, nx);
        f2.view_mut((0, layout.n_u), (layout.n_sigma, layout.n_sigma)).fill_with_identity();
        // b = b_ini + F3 x
        let mut f3 = DMatrix::zeros(rows, nx);
        let y_row = (n_u + 1) * t_ini;
        f3.view_mut((y_row, layout.n_u), (layout.n_sigma, layout.n_sigma)).fill_with_identity();
        f3.view_mut((ini_rows, 0), (layout.n_u, layout.n_u)).fill_with_identity();
        f3.view_mut((ini_rows + layout.n_u, layout.decision()), (n, layout.n_eps)).copy_from(&downsampling.matrix);

        let yh = &predictor.output_map;
        let s1 = yh.transpose() * &weights.q * yh;
        let s2 = predictor.pinv.transpose() * &predictor.pinv;
        let f3t = f3.transpose();
        let m = f1.transpose() * &weights.r * &f1
            + &f3t * &s1 * &f3
            + (&f3t * &s2 * &f3) * weights.lambda_g
            + f2.transpose() * &f2 * weights.lambda_y;
        let m = linalg::symmetrize(&m);
        let constant_map = &s1 + &s2 * weights.lambda_g;
        let linear_map = (&f3t * &constant_map) * 2.0;
        let g1 = spacing.selector(p, n);
        let spacing_output_map = &g1 * yh;
        let spacing_map = &spacing_output_map * &f3;
        Ok(Self {
            layout,
            f1,
            f2,
            f3,
            s1,
            s2,
            m,
            linear_map,
            constant_map,
            spacing_output_map,
            spacing_map,
            spacing,
            horizon: n,
            ini_rows,
        })
    }

    /// `b_ini = col(u_ini, eps_ini, y_ini, 0, 0)`.
    pub fn b_ini(&self, ini: &IniWindow) -> DVector<f64> {
        let mut b = DVector::zeros(self.f3.nrows());
        let head = linalg::vcat(&[&ini.u, &ini.eps, &ini.y]);
        b.rows_mut(0, head.len()).copy_from(&head);
        b
    }

    /// Fill in the history-dependent terms. `bounds` overrides the spacing
    /// bounds of the template when given.
    pub fn instantiate(&self, ini: &IniWindow, bounds: Option<&SpacingSpec>, u_min: f64, u_max: f64) -> Result<RobustQp> {
        if ini.u.len() + ini.eps.len() + ini.y.len() != self.ini_rows {
            return Err(dim_err(format!(
                "history window has {} entries, expected {}",
                ini.u.len() + ini.eps.len() + ini.y.len(),
                self.ini_rows
            )));
        }
        let b_ini = self.b_ini(ini);
        let spec = bounds.unwrap_or(&self.spacing);
        Ok(RobustQp {
            layout: self.layout,
            m: self.m.clone(),
            d: &self.linear_map * &b_ini,
            c0: b_ini.dot(&(&self.constant_map * &b_ini)),
            spacing_map: self.spacing_map.clone(),
            spacing_offset: &self.spacing_output_map * &b_ini,
            spacing_lower: spec.expand(&spec.lower, self.horizon),
            spacing_upper: spec.expand(&spec.upper, self.horizon),
            u_min,
            u_max,
        })
    }
}

/// Build the data-driven robust QP for one control step.
pub fn build_robust_qp(
    predictor: &HankelPredictor,
    weights: &ControllerWeights,
    ini: &IniWindow,
    downsampling: &Downsampling,
    spacing: SpacingSpec,
    u_min: f64,
    u_max: f64,
) -> Result<RobustQp> {
    DeepcQpTemplate::new(predictor, weights, downsampling, spacing)?.instantiate(ini, None, u_min, u_max)
}

/// Horizon prediction matrices of a linear model:
/// `y = Phi x0 + Psi u + Xi eps` for outputs one to `N` steps ahead.
#[derive(Debug, Clone)]
pub struct ModelPrediction {
    pub phi: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub xi: DMatrix<f64>,
}

impl ModelPrediction {
    pub fn new(model: &StateSpace, horizon: usize) -> Self {
        let (nx, nu, p) = (model.state_dim(), model.input_dim(), model.output_dim());
        let mut phi = DMatrix::zeros(p * horizon, nx);
        let mut psi = DMatrix::zeros(p * horizon, nu * horizon);
        let mut xi = DMatrix::zeros(p * horizon, horizon);
        // powers[k] = C A^k
        let mut ca = model.c.clone();
        let mut powers = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            powers.push(ca.clone());
            ca = &ca * &model.a;
        }
        for i in 0..horizon {
            phi.view_mut((i * p, 0), (p, nx)).copy_from(&(&powers[i] * &model.a));
            for j in 0..=i {
                let cak = &powers[i - j];
                psi.view_mut((i * p, j * nu), (p, nu)).copy_from(&(cak * &model.b));
                xi.view_mut((i * p, j), (p, 1)).copy_from(&(cak * &model.h));
            }
        }
        Self { phi, psi, xi }
    }
}

/// Robust QP for model-based prediction from the state estimate `x0`.
/// The decision vector has no slack part.
pub fn build_model_qp(
    pred: &ModelPrediction,
    x0: &DVector<f64>,
    weights: &ControllerWeights,
    downsampling: &Downsampling,
    spacing: &SpacingSpec,
    u_min: f64,
    u_max: f64,
) -> Result<RobustQp> {
    let n = downsampling.horizon;
    let p = pred.phi.nrows() / n;
    let nu_tot = pred.psi.ncols();
    weights.validate(p * n, nu_tot)?;
    let layout = VariableLayout { n_u: nu_tot, n_sigma: 0, n_eps: downsampling.knot_count() };
    // y = free + Y x
    let mut ymap = DMatrix::zeros(p * n, layout.total());
    ymap.view_mut((0, 0), (p * n, nu_tot)).copy_from(&pred.psi);
    ymap.view_mut((0, nu_tot), (p * n, layout.n_eps)).copy_from(&(&pred.xi * &downsampling.matrix));
    let free = &pred.phi * x0;
    let mut m = ymap.transpose() * &weights.q * &ymap;
    {
        let mut block = m.view_mut((0, 0), (nu_tot, nu_tot));
        block += &weights.r;
    }
    let g1 = spacing.selector(p, n);
    Ok(RobustQp {
        layout,
        m: linalg::symmetrize(&m),
        d: ymap.transpose() * (&weights.q * &free) * 2.0,
        c0: free.dot(&(&weights.q * &free)),
        spacing_map: &g1 * &ymap,
        spacing_offset: &g1 * &free,
        spacing_lower: spacing.expand(&spacing.lower, n),
        spacing_upper: spacing.expand(&spacing.upper, n),
        u_min,
        u_max,
    })
}

/// Shared handle used by controllers that rebuild the QP every step.
pub type SharedTemplate = Arc<DeepcQpTemplate>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{linearize, Scope, TrafficConfig};

    #[test]
    fn standard_weights_follow_the_output_order() {
        let w = ControllerWeights::standard(2, 1, 1, 3);
        assert_eq!(w.q.shape(), (9, 9));
        let diag: Vec<f64> = w.q.diagonal().iter().cloned().collect();
        assert_eq!(diag, vec![1.0, 1.0, 0.5, 1.0, 1.0, 0.5, 1.0, 1.0, 0.5]);
        assert_eq!(w.r, DMatrix::identity(3, 3) * 0.1);
        assert!(w.validate(9, 3).is_ok());
        assert!(w.validate(8, 3).is_err());
    }

    #[test]
    fn model_prediction_matches_stepping() {
        let model = linearize(&TrafficConfig::default(), 15.0, Scope::Subsystem(1));
        let n = 6;
        let pred = ModelPrediction::new(&model, n);
        let x0 = DVector::from_fn(model.state_dim(), |i, _| (i as f64 * 0.37).sin());
        let u = DVector::from_fn(n, |k, _| (k as f64 * 0.5).cos());
        let e = DVector::from_fn(n, |k, _| 0.1 * k as f64 - 0.2);
        let stacked = &pred.phi * &x0 + &pred.psi * &u + &pred.xi * &e;
        let mut x = x0.clone();
        let p = model.output_dim();
        for k in 0..n {
            x = model.step(&x, &DVector::from_element(1, u[k]), e[k]);
            let y = &model.c * &x;
            assert!((stacked.rows(k * p, p) - y).amax() < 1e-12);
        }
    }

    #[test]
    fn layout_totals() {
        let l = VariableLayout { n_u: 50, n_sigma: 80, n_eps: 6 };
        assert_eq!((l.decision(), l.total()), (130, 136));
    }
}
