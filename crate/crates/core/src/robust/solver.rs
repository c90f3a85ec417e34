use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::conic::{Cone, ConicProgram};
use crate::error::{Error, Result};

/// Environment variable that selects the conic backend.
pub const SOLVER_ENV: &str = "MIXFLOW_SOLVER";

/// Interior-point backend for conic programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Clarabel,
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clarabel" | "" => Ok(Self::Clarabel),
            other => Err(Error::UnknownBackend(other.to_string())),
        }
    }
}

impl Backend {
    /// Backend named by `MIXFLOW_SOLVER`, or the default when unset.
    pub fn from_env() -> Result<Self> {
        match std::env::var(SOLVER_ENV) {
            Ok(v) => v.parse(),
            Err(_) => Ok(Self::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
    /// Seconds; infinite when not positive.
    pub time_limit: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol_gap: 1e-9, tol_feas: 1e-9, max_iter: 200, time_limit: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Converged to the reduced tolerances only.
    AlmostOptimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
    NumericalError,
}

impl SolveStatus {
    pub fn is_usable(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::AlmostOptimal)
    }
}

fn map_status(s: SolverStatus) -> SolveStatus {
    match s {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::AlmostOptimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        SolverStatus::MaxIterations => SolveStatus::IterationLimit,
        SolverStatus::MaxTime => SolveStatus::TimeLimit,
        _ => SolveStatus::NumericalError,
    }
}

/// Result of a conic solve.
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub y: DVector<f64>,
    pub slack: DVector<f64>,
    pub status: SolveStatus,
    /// Robust cost `-b'y + offset`.
    pub objective: f64,
    pub iterations: u32,
    pub solve_time: f64,
}

impl ConicSolution {
    pub fn inputs(&self, prog: &ConicProgram) -> DVector<f64> {
        self.y.rows(prog.input_range.start, prog.input_range.len()).into_owned()
    }

    pub fn decision(&self, prog: &ConicProgram) -> DVector<f64> {
        self.y.rows(prog.decision_range.start, prog.decision_range.len()).into_owned()
    }
}

/// Raw form handed to the interior-point code:
/// minimize `x'Px/2 + q'x` subject to `A x + s = b`, `s` in the cones.
pub(crate) struct RawProblem {
    pub n: usize,
    /// Upper triangle of `P` as triplets.
    pub p: Vec<(usize, usize, f64)>,
    pub q: Vec<f64>,
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

pub(crate) struct RawSolution {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: u32,
}

fn csc(m: usize, n: usize, t: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let (mut i, mut j, mut v) = (Vec::with_capacity(t.len()), Vec::with_capacity(t.len()), Vec::with_capacity(t.len()));
    for &(r, c, x) in t {
        i.push(r);
        j.push(c);
        v.push(x);
    }
    CscMatrix::new_from_triplets(m, n, i, j, v)
}

/// Merge neighbouring linear cones of the same kind.
fn merged_cones(cones: &[Cone]) -> Vec<SupportedConeT<f64>> {
    let mut out: Vec<SupportedConeT<f64>> = Vec::new();
    for c in cones {
        match (*c, out.last_mut()) {
            (Cone::Zero(n), Some(SupportedConeT::ZeroConeT(m))) => *m += n,
            (Cone::Nonnegative(n), Some(SupportedConeT::NonnegativeConeT(m))) => *m += n,
            (Cone::Zero(n), _) => out.push(SupportedConeT::ZeroConeT(n)),
            (Cone::Nonnegative(n), _) => out.push(SupportedConeT::NonnegativeConeT(n)),
            (Cone::SecondOrder(n), _) => out.push(SupportedConeT::SecondOrderConeT(n)),
        }
    }
    out
}

pub(crate) fn solve_raw(problem: &RawProblem, settings: &SolverSettings) -> Result<RawSolution> {
    let m = problem.b.len();
    let n = problem.n;
    let p = csc(n, n, &problem.p);
    let a = csc(m, n, &problem.a);
    let cones = merged_cones(&problem.cones);
    let time_limit = if settings.time_limit > 0.0 { settings.time_limit } else { f64::INFINITY };
    let st = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(settings.tol_gap)
        .tol_gap_rel(settings.tol_gap)
        .tol_feas(settings.tol_feas)
        .max_iter(settings.max_iter)
        .time_limit(time_limit)
        .build()
        .map_err(|e| Error::Solver(format!("bad settings: {e}")))?;
    let mut solver = DefaultSolver::new(&p, &problem.q, &a, &problem.b, &cones, st)
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    Ok(RawSolution {
        x: sol.x.clone(),
        s: sol.s.clone(),
        status: map_status(sol.status),
        iterations: sol.iterations,
    })
}

/// Solve a conic program with the chosen backend.
///
/// Infeasibility and iteration limits are reported through the status;
/// an `Err` means the problem could not be set up.
pub fn solve_conic(prog: &ConicProgram, backend: Backend, settings: &SolverSettings) -> Result<ConicSolution> {
    match backend {
        Backend::Clarabel => {}
    }
    let start = Instant::now();
    let raw = RawProblem {
        n: prog.n_vars,
        p: Vec::new(),
        q: prog.b.iter().map(|v| -v).collect(),
        a: prog.a_t.clone(),
        b: prog.c.iter().cloned().collect(),
        cones: prog.cones.clone(),
    };
    let sol = solve_raw(&raw, settings)?;
    let y = DVector::from_vec(sol.x);
    let objective = -prog.b.dot(&y) + prog.objective_offset;
    Ok(ConicSolution {
        y,
        slack: DVector::from_vec(sol.s),
        status: sol.status,
        objective,
        iterations: sol.iterations,
        solve_time: start.elapsed().as_secs_f64(),
    })
}

/// Upper-triangle triplets of a dense symmetric matrix with a column offset.
pub(crate) fn upper_triplets(m: &DMatrix<f64>, offset: usize, out: &mut Vec<(usize, usize, f64)>) {
    for j in 0..m.ncols() {
        for i in 0..=j {
            let v = m[(i, j)];
            if v != 0.0 {
                out.push((offset + i, offset + j, v));
            }
        }
    }
}
