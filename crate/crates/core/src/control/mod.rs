//! Closed-loop controllers for the connected vehicles.

mod history;
mod observer;

pub use history::{HistoryBuffer, RawSample};
pub use observer::deadbeat_estimate;

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{partition_hankel, TrajectoryDataset};
use crate::disturbance::{enumerate_vertices, estimate_disturbance, Downsampling, EstimatorKind};
use crate::error::{config_err, Error, Result};
use crate::robust::{
    build_model_qp, condense, pseudo_inverse_predictor, reformulate, solve_conic, to_conic, Backend,
    ControllerWeights, DeepcQpTemplate, HankelPredictor, ModelPrediction, QpFactor, RobustQp, SolveStatus,
    SolverSettings, SpacingSpec,
};
use crate::traffic::{linearize, Scope, ScopeLayout, TrafficConfig};

/// Velocity and connected-vehicle spacings the error coordinates refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub v_star: f64,
    /// Equilibrium spacing of each connected vehicle, in platoon order.
    pub cav_spacing: Vec<f64>,
}

/// Equilibrium from the recent head-vehicle velocities: their mean, with
/// each connected vehicle's spacing from its car-following curve.
pub fn update_equilibrium(head_window: &[f64], config: &TrafficConfig) -> Equilibrium {
    let v_star = if head_window.is_empty() {
        0.0
    } else {
        head_window.iter().sum::<f64>() / head_window.len() as f64
    };
    let cav_spacing = config.cav_positions.iter().map(|&c| config.equilibrium_spacing(c, v_star)).collect();
    Equilibrium { v_star, cav_spacing }
}

/// How the robust program is solved each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolvePath {
    /// Shared-quadratic form with the worst vertex folded into the spacing rows.
    #[default]
    Condensed,
    /// Full conic form of the selected robust method.
    Conic,
}

/// Predictor used by a controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Hankel matrices of recorded trajectories.
    Data,
    /// Linearized model with a state estimate from the recent window.
    Model,
}

/// Tuning shared by every controller of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSettings {
    pub t_ini: usize,
    pub horizon: usize,
    pub downsample_period: usize,
    pub estimator: EstimatorKind,
    pub method: crate::robust::RobustMethod,
    pub solve_path: SolvePath,
    pub lambda_g: f64,
    pub lambda_y: f64,
    pub input_weight: f64,
    pub velocity_weight: f64,
    pub spacing_weight: f64,
    /// Steps of delay on the measured disturbance.
    pub disturbance_delay: usize,
    #[serde(skip)]
    pub backend: Backend,
    #[serde(skip)]
    pub solver: SolverSettings,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            t_ini: 20,
            horizon: 50,
            downsample_period: 12,
            estimator: EstimatorKind::TimeVarying,
            method: crate::robust::RobustMethod::Vertex,
            solve_path: SolvePath::Condensed,
            lambda_g: 10.0,
            lambda_y: 1e4,
            input_weight: 0.1,
            velocity_weight: 1.0,
            spacing_weight: 0.5,
            disturbance_delay: 0,
            backend: Backend::Clarabel,
            solver: SolverSettings::default(),
        }
    }
}

impl ControllerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.t_ini == 0 || self.horizon < 3 {
            return Err(config_err("need t_ini >= 1 and horizon >= 3"));
        }
        Downsampling::new(self.horizon, self.downsample_period)?;
        if !(self.input_weight > 0.0 && self.velocity_weight >= 0.0 && self.spacing_weight >= 0.0) {
            return Err(config_err("weights must be nonnegative with a positive input weight"));
        }
        if !(self.lambda_g >= 0.0 && self.lambda_y > 0.0) {
            return Err(config_err("need lambda_g >= 0 and lambda_y > 0"));
        }
        Ok(())
    }

    fn weights(&self, layout: &ScopeLayout, with_regularization: bool) -> ControllerWeights {
        let mut per_step = vec![self.velocity_weight; layout.vehicles.len()];
        per_step.extend(std::iter::repeat(self.spacing_weight).take(layout.cavs.len()));
        let (lg, ly) = if with_regularization { (self.lambda_g, self.lambda_y) } else { (0.0, 1.0) };
        ControllerWeights::diagonal(&per_step, self.input_weight, layout.input_dim(), self.horizon, lg, ly)
    }
}

/// Outcome of one control step.
#[derive(Debug, Clone)]
pub struct ControlDecision {
    /// Inputs applied now, one per connected vehicle of the scope.
    pub input: Vec<f64>,
    /// Planned inputs over the horizon.
    pub plan: DVector<f64>,
    /// Predicted outputs over the horizon at the centre of the disturbance set.
    pub predicted_output: DVector<f64>,
    pub status: SolveStatus,
    /// The previous plan was reused because the solve failed.
    pub fallback: bool,
    /// Spacing constraints re-checked at every vertex after the solve.
    pub constraints_verified: bool,
    pub objective: f64,
    pub vertex_count: usize,
    /// Wall time of building and solving, seconds.
    pub solve_time: f64,
}

enum Predictor {
    Data { predictor: Box<HankelPredictor>, template: Arc<DeepcQpTemplate>, factor: Option<QpFactor> },
    Model { config: Arc<TrafficConfig> },
}

/// A controller for one scope together with its measurement history.
pub struct ControllerState {
    pub scope: Scope,
    pub layout: ScopeLayout,
    pub settings: ControllerSettings,
    pub history: HistoryBuffer,
    downsampling: Downsampling,
    predictor: Predictor,
    weights: ControllerWeights,
    /// Indices of this scope's connected vehicles among all connected vehicles.
    cav_slots: Vec<usize>,
    u_min: f64,
    u_max: f64,
    s_min: f64,
    s_max: f64,
    dt: f64,
    last_plan: Option<DVector<f64>>,
}

impl ControllerState {
    /// Data-driven controller built from offline data of the same scope.
    pub fn data_driven(config: &TrafficConfig, dataset: &TrajectoryDataset, settings: ControllerSettings) -> Result<Self> {
        settings.validate()?;
        let scope = dataset.scope;
        let layout = scope.layout(config);
        if dataset.input_dim() != layout.input_dim() || dataset.output_dim() != layout.output_dim() {
            return Err(Error::Dimension(format!("dataset does not match scope {scope:?}")));
        }
        let blocks = partition_hankel(dataset, settings.t_ini, settings.horizon)?;
        let predictor = pseudo_inverse_predictor(blocks);
        let downsampling = Downsampling::new(settings.horizon, settings.downsample_period)?;
        let weights = settings.weights(&layout, true);
        let spacing = spacing_spec(&layout, &[], 0.0, 0.0);
        let template = DeepcQpTemplate::new(&predictor, &weights, &downsampling, spacing)?;
        let nd = template.layout.decision();
        let hessian = template.m.view((0, 0), (nd, nd)).into_owned() * 2.0;
        let factor = QpFactor::new(&hessian).ok();
        Ok(Self::assemble(
            config,
            scope,
            layout,
            settings,
            downsampling,
            Predictor::Data { predictor: Box::new(predictor), template: Arc::new(template), factor },
            weights,
        ))
    }

    /// Model-based controller using the platoon's own linearization.
    pub fn model_based(config: &TrafficConfig, scope: Scope, settings: ControllerSettings) -> Result<Self> {
        settings.validate()?;
        config.validate()?;
        let layout = scope.layout(config);
        let downsampling = Downsampling::new(settings.horizon, settings.downsample_period)?;
        let weights = settings.weights(&layout, false);
        Ok(Self::assemble(
            config,
            scope,
            layout,
            settings,
            downsampling,
            Predictor::Model { config: Arc::new(config.clone()) },
            weights,
        ))
    }

    fn assemble(
        config: &TrafficConfig,
        scope: Scope,
        layout: ScopeLayout,
        settings: ControllerSettings,
        downsampling: Downsampling,
        predictor: Predictor,
        weights: ControllerWeights,
    ) -> Self {
        let cav_slots = layout
            .cavs
            .iter()
            .map(|c| config.cav_positions.iter().position(|x| x == c).unwrap())
            .collect();
        Self {
            scope,
            history: HistoryBuffer::new(settings.t_ini),
            layout,
            settings,
            downsampling,
            predictor,
            weights,
            cav_slots,
            u_min: config.u_min,
            u_max: config.u_max,
            s_min: config.s_min,
            s_max: config.s_max,
            dt: config.dt,
            last_plan: None,
        }
    }

    /// Connected-vehicle slots (platoon-wide indices) this controller drives.
    pub fn cav_slots(&self) -> &[usize] {
        &self.cav_slots
    }

    pub fn hankel_predictor(&self) -> Option<&HankelPredictor> {
        match &self.predictor {
            Predictor::Data { predictor, .. } => Some(predictor),
            Predictor::Model { .. } => None,
        }
    }

    /// Record a completed sample and compute the next decision.
    pub fn step(&mut self, sample: RawSample, eq: &Equilibrium) -> Result<ControlDecision> {
        self.history.push(sample);
        self.decide(eq)
    }

    /// Robust QP for the current history and equilibrium.
    pub fn current_qp(&self, eq: &Equilibrium) -> Result<(RobustQp, crate::disturbance::DisturbanceBox)> {
        if !self.history.is_full() {
            return Err(Error::InsufficientData { required: self.settings.t_ini, available: self.history.len() });
        }
        let s_star: Vec<f64> = self.cav_slots.iter().map(|&k| eq.cav_spacing[k]).collect();
        let ini = self.history.ini_window(eq.v_star, &s_star);
        let eps: Vec<f64> = ini.eps.iter().cloned().collect();
        let full_box = estimate_disturbance(self.settings.estimator, &eps, self.settings.horizon, self.dt);
        let knot_box = self.downsampling.reduce_box(&full_box)?;
        let bounds = spacing_spec(&self.layout, &s_star, self.s_min, self.s_max);
        let qp = match &self.predictor {
            Predictor::Data { template, .. } => template.instantiate(&ini, Some(&bounds), self.u_min, self.u_max)?,
            Predictor::Model { config } => {
                let model = linearize(config, eq.v_star, self.scope);
                let x0 = deadbeat_estimate(&model, &ini, self.settings.t_ini)?;
                let pred = ModelPrediction::new(&model, self.settings.horizon);
                build_model_qp(&pred, &x0, &self.weights, &self.downsampling, &bounds, self.u_min, self.u_max)?
            }
        };
        Ok((qp, knot_box))
    }

    /// Solve the robust program for the current history.
    pub fn decide(&mut self, eq: &Equilibrium) -> Result<ControlDecision> {
        let start = Instant::now();
        let (qp, knot_box) = self.current_qp(eq)?;
        let vertices = enumerate_vertices(&knot_box)?;
        let nd = qp.layout.decision();
        let (status, xd, objective) = match self.settings.solve_path {
            SolvePath::Condensed => {
                let cp = condense(&qp, &vertices)?;
                let factor = match &self.predictor {
                    Predictor::Data { factor, .. } => factor.as_ref(),
                    Predictor::Model { .. } => None,
                };
                let sol = cp.solve(factor, &self.settings.solver)?;
                (sol.status, sol.x, sol.objective)
            }
            SolvePath::Conic => {
                let prog = reformulate(qp.clone(), &knot_box, self.settings.method)?;
                let conic = to_conic(&prog)?;
                let sol = solve_conic(&conic, self.settings.backend, &self.settings.solver)?;
                let xd = sol.decision(&conic);
                (sol.status, xd, sol.objective)
            }
        };
        let n_u = qp.layout.n_u;
        let per_step = self.layout.input_dim();
        let (plan, fallback, verified) = if status.is_usable() {
            let verified = verify_spacing(&qp, &xd, &vertices, 1e-5);
            (xd.rows(0, n_u).into_owned(), false, verified)
        } else {
            let plan = match &self.last_plan {
                Some(p) => {
                    // shift by one step, holding the last entry
                    let keep = p.len() - per_step;
                    let mut shifted = p.clone();
                    shifted.rows_mut(0, keep).copy_from(&p.rows(per_step, keep));
                    shifted
                }
                None => DVector::zeros(n_u),
            };
            (plan, true, false)
        };
        let input: Vec<f64> = (0..per_step).map(|i| plan[i].clamp(self.u_min, self.u_max)).collect();
        let predicted_output = self.predicted_output(&qp, &xd, &knot_box.center(), nd, eq);
        self.last_plan = Some(plan.clone());
        Ok(ControlDecision {
            input,
            plan,
            predicted_output,
            status,
            fallback,
            constraints_verified: verified,
            objective,
            vertex_count: vertices.len(),
            solve_time: start.elapsed().as_secs_f64(),
        })
    }

    fn predicted_output(
        &self,
        qp: &RobustQp,
        xd: &DVector<f64>,
        w: &DVector<f64>,
        nd: usize,
        eq: &Equilibrium,
    ) -> DVector<f64> {
        match &self.predictor {
            Predictor::Data { predictor, template, .. } => {
                if xd.len() != nd {
                    return DVector::zeros(0);
                }
                let s_star: Vec<f64> = self.cav_slots.iter().map(|&k| eq.cav_spacing[k]).collect();
                let ini = self.history.ini_window(eq.v_star, &s_star);
                let x = qp.join(xd, w);
                predictor.predict(&(template.b_ini(&ini) + &template.f3 * x))
            }
            Predictor::Model { .. } => DVector::zeros(0),
        }
    }
}

/// Spacing outputs of a scope with bounds `[s_min - s*, s_max - s*]`.
fn spacing_spec(layout: &ScopeLayout, s_star: &[f64], s_min: f64, s_max: f64) -> SpacingSpec {
    let nv = layout.vehicles.len();
    let q = layout.cavs.len();
    let star = |k: usize| s_star.get(k).copied().unwrap_or(0.0);
    SpacingSpec {
        outputs: (nv..nv + q).collect(),
        lower: (0..q).map(|k| s_min - star(k)).collect(),
        upper: (0..q).map(|k| s_max - star(k)).collect(),
    }
}

/// Whether the predicted spacing stays in its band at every vertex.
pub fn verify_spacing(qp: &RobustQp, xd: &DVector<f64>, vertices: &[DVector<f64>], tol: f64) -> bool {
    vertices.iter().all(|w| {
        let s = qp.spacing(&qp.join(xd, w));
        (0..s.len()).all(|l| s[l] <= qp.spacing_upper[l] + tol && s[l] >= qp.spacing_lower[l] - tol)
    })
}

/// Estimator-free variant: the nominal problem with a fixed disturbance sequence.
pub fn solve_nominal(qp: &RobustQp, knots: &DVector<f64>, settings: &SolverSettings) -> Result<crate::robust::CondensedSolution> {
    condense(qp, std::slice::from_ref(knots))?.solve(None, settings)
}
