//! Compact equivalent of the vertex program used inside the control loop.
//!
//! Every vertex cost shares the quadratic part in the decision variables, so
//! the vertex epigraph constraints are linear in `(x, t)` once that part is
//! moved to the objective. The spacing rows become one pair per step with
//! the worst vertex folded into the right-hand side.

use nalgebra::{DMatrix, DVector};

use super::qp::RobustQp;
use super::solver::{solve_raw, upper_triplets, RawProblem, SolveStatus, SolverSettings};
use super::conic::Cone;
use crate::error::{dim_err, Error, Result};

/// `min x'Hx/2 + max_j (l_j'x + k_j)` subject to `G x <= h` and input bounds.
#[derive(Debug, Clone)]
pub struct CondensedProgram {
    pub n_u: usize,
    pub hessian: DMatrix<f64>,
    pub vertex_linear: Vec<DVector<f64>>,
    pub vertex_constant: Vec<f64>,
    pub ineq: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub u_min: f64,
    pub u_max: f64,
}

/// Relative curvature given to the epigraph variable in the active-set path.
const EPIGRAPH_CURVATURE: f64 = 1e-9;

/// Algorithm for a condensed program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CondensedBackend {
    /// Dual active-set method (Goldfarb-Idnani).
    #[default]
    ActiveSet,
    /// Interior-point method on the epigraph form.
    InteriorPoint,
}

#[derive(Debug, Clone)]
pub struct CondensedSolution {
    /// `col(u, sigma_y)`.
    pub x: DVector<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: u32,
}

/// Inverse Cholesky factor of the Hessian, reusable while it is unchanged.
#[derive(Debug, Clone)]
pub struct QpFactor {
    n: usize,
    linv_row_major: Vec<f64>,
}

impl QpFactor {
    pub fn new(hessian: &DMatrix<f64>) -> Result<Self> {
        let n = hessian.nrows();
        let chol = hessian
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Solver("Hessian is not positive definite".into()))?;
        let linv = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
        Ok(Self { n, linv_row_major: linv.transpose().as_slice().to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

/// Condense a robust QP over the given vertices.
pub fn condense(qp: &RobustQp, vertices: &[DVector<f64>]) -> Result<CondensedProgram> {
    qp.validate()?;
    if vertices.is_empty() {
        return Err(dim_err("at least one vertex is required"));
    }
    let nd = qp.layout.decision();
    let ne = qp.layout.n_eps;
    let mdd = qp.m.view((0, 0), (nd, nd));
    let mdw = qp.m.view((0, nd), (nd, ne));
    let mww = qp.m.view((nd, nd), (ne, ne));
    let dd = qp.d.rows(0, nd);
    let dw = qp.d.rows(nd, ne);
    let mut vertex_linear = Vec::with_capacity(vertices.len());
    let mut vertex_constant = Vec::with_capacity(vertices.len());
    for w in vertices {
        if w.len() != ne {
            return Err(dim_err("vertex size differs from the disturbance part"));
        }
        vertex_linear.push(mdw * w * 2.0 + dd);
        vertex_constant.push(w.dot(&(mww * w)) + dw.dot(w) + qp.c0);
    }
    let ns = qp.spacing_rows();
    let pd = qp.spacing_map.columns(0, nd);
    let pw = qp.spacing_map.columns(nd, ne);
    let shifts: Vec<DVector<f64>> = vertices.iter().map(|w| pw * w).collect();
    let mut ineq = DMatrix::zeros(2 * ns, nd);
    let mut rhs = DVector::zeros(2 * ns);
    for l in 0..ns {
        let hi = shifts.iter().map(|s| s[l]).fold(f64::NEG_INFINITY, f64::max);
        let lo = shifts.iter().map(|s| s[l]).fold(f64::INFINITY, f64::min);
        ineq.row_mut(l).copy_from(&pd.row(l));
        rhs[l] = qp.spacing_upper[l] - qp.spacing_offset[l] - hi;
        ineq.row_mut(ns + l).copy_from(&(-pd.row(l)));
        rhs[ns + l] = qp.spacing_offset[l] + lo - qp.spacing_lower[l];
    }
    Ok(CondensedProgram {
        n_u: qp.layout.n_u,
        hessian: mdd.into_owned() * 2.0,
        vertex_linear,
        vertex_constant,
        ineq,
        ineq_rhs: rhs,
        u_min: qp.u_min,
        u_max: qp.u_max,
    })
}

impl CondensedProgram {
    pub fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    /// Worst-case robust cost of `x`.
    pub fn cost(&self, x: &DVector<f64>) -> f64 {
        let worst = self
            .vertex_linear
            .iter()
            .zip(&self.vertex_constant)
            .map(|(l, k)| l.dot(x) + k)
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * x.dot(&(&self.hessian * x)) + worst
    }

    /// Largest violation of the inequality rows and input bounds.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let g = (&self.ineq * x - &self.ineq_rhs).max().max(0.0);
        let u = (0..self.n_u).map(|i| (x[i] - self.u_max).max(self.u_min - x[i]).max(0.0)).fold(0.0, f64::max);
        g.max(u)
    }

    /// Solve with the dual active-set method.
    pub fn solve(&self, factor: Option<&QpFactor>, settings: &SolverSettings) -> Result<CondensedSolution> {
        self.solve_with(CondensedBackend::ActiveSet, factor, settings)
    }

    pub fn solve_with(
        &self,
        backend: CondensedBackend,
        factor: Option<&QpFactor>,
        settings: &SolverSettings,
    ) -> Result<CondensedSolution> {
        match backend {
            CondensedBackend::InteriorPoint => self.solve_epigraph(settings),
            CondensedBackend::ActiveSet if self.vertex_linear.len() == 1 => self.solve_active_set(factor),
            CondensedBackend::ActiveSet => {
                let base = match factor {
                    Some(f) if f.n == self.dim() => f.clone(),
                    Some(_) => return Err(dim_err("cached factor has the wrong size")),
                    None => QpFactor::new(&self.hessian)?,
                };
                // Work around the minimizer of the mean vertex cost so the
                // vertex terms left over are small differences.
                let n = self.dim();
                let linv = DMatrix::from_row_slice(n, n, &base.linv_row_major);
                let mean = self.vertex_linear.iter().fold(DVector::zeros(n), |a, l| a + l) / self.vertex_linear.len() as f64;
                let origin = -(linv.transpose() * (&linv * mean));
                let curv = &self.hessian * &origin;
                let quad = 0.5 * origin.dot(&curv);
                let linear: Vec<DVector<f64>> = self.vertex_linear.iter().map(|l| l + &curv).collect();
                let constant: Vec<f64> =
                    self.vertex_linear.iter().zip(&self.vertex_constant).map(|(l, k)| quad + l.dot(&origin) + k).collect();
                // The epigraph variable gets a small curvature so the
                // active-set method applies; re-centering it at the first
                // optimum makes the perturbation vanish to first order.
                let start = constant.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let first = self.solve_active_set_epigraph(&base, &origin, &linear, &constant, start)?;
                if !first.status.is_usable() {
                    return Ok(first);
                }
                let z = &first.x - &origin;
                let center = linear.iter().zip(&constant).map(|(l, k)| l.dot(&z) + k).fold(f64::NEG_INFINITY, f64::max);
                let second = self.solve_active_set_epigraph(&base, &origin, &linear, &constant, center)?;
                Ok(CondensedSolution { iterations: first.iterations + second.iterations, ..second })
            }
        }
    }

    /// Rows `A z <= b` for `x = origin + z`, padded to `n` columns.
    fn constraint_rows(&self, n: usize, origin: Option<&DVector<f64>>) -> (Vec<f64>, Vec<f64>) {
        let rows = self.ineq.nrows() + 2 * self.n_u;
        let shift = |i: usize| origin.map_or(0.0, |o| o[i]);
        let g_origin = origin.map(|o| &self.ineq * o);
        let mut amat = Vec::with_capacity(rows * n);
        let mut bvec = Vec::with_capacity(rows);
        for r in 0..self.ineq.nrows() {
            amat.extend(self.ineq.row(r).iter());
            amat.extend(std::iter::repeat(0.0).take(n - self.dim()));
            bvec.push(self.ineq_rhs[r] - g_origin.as_ref().map_or(0.0, |g| g[r]));
        }
        for i in 0..self.n_u {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            amat.extend_from_slice(&row);
            bvec.push(self.u_max - shift(i));
            row[i] = -1.0;
            amat.extend_from_slice(&row);
            bvec.push(shift(i) - self.u_min);
        }
        (amat, bvec)
    }

    fn solve_active_set_epigraph(
        &self,
        base: &QpFactor,
        origin: &DVector<f64>,
        linear: &[DVector<f64>],
        constant: &[f64],
        center: f64,
    ) -> Result<CondensedSolution> {
        let n = self.dim();
        let m = n + 1;
        let scale = (self.hessian.trace() / n as f64).max(1e-12);
        let rho = EPIGRAPH_CURVATURE * scale;
        let mut qmat = vec![0.0; m * m];
        for i in 0..n {
            qmat[i * m..i * m + n].copy_from_slice(&base.linv_row_major[i * n..(i + 1) * n]);
        }
        qmat[n * m + n] = 1.0 / rho.sqrt();
        let (mut amat, mut bvec) = self.constraint_rows(m, Some(origin));
        // tau' = tau - center:  l_j'z - tau' <= center - k_j
        for (l, k) in linear.iter().zip(constant) {
            amat.extend(l.iter());
            amat.push(-1.0);
            bvec.push(center - k);
        }
        let mut c = vec![0.0; m];
        c[n] = 1.0;
        let mut sol = self.run_quadprog(qmat, &c, &amat, &bvec, n)?;
        if sol.status.is_usable() {
            sol.x += origin;
            sol.objective = self.cost(&sol.x);
        }
        Ok(sol)
    }

    fn run_quadprog(&self, mut qmat: Vec<f64>, c: &[f64], amat: &[f64], bvec: &[f64], n: usize) -> Result<CondensedSolution> {
        match quadprog::solve_qp(&mut qmat, c, amat, bvec, 0, true) {
            Ok(sol) => {
                let x = DVector::from_iterator(n, sol.sol.into_iter().take(n));
                Ok(CondensedSolution {
                    objective: self.cost(&x),
                    x,
                    status: SolveStatus::Optimal,
                    iterations: sol.iter as u32,
                })
            }
            Err(quadprog::Error::Infeasible) => Ok(CondensedSolution {
                x: DVector::zeros(n),
                objective: f64::NAN,
                status: SolveStatus::Infeasible,
                iterations: 0,
            }),
            Err(e) => Err(Error::Solver(format!("active-set solve failed: {e:?}"))),
        }
    }

    fn solve_active_set(&self, factor: Option<&QpFactor>) -> Result<CondensedSolution> {
        let n = self.dim();
        let qmat = match factor {
            Some(f) if f.n == n => f.linv_row_major.clone(),
            Some(_) => return Err(dim_err("cached factor has the wrong size")),
            None => QpFactor::new(&self.hessian)?.linv_row_major,
        };
        let (amat, bvec) = self.constraint_rows(n, None);
        self.run_quadprog(qmat, self.vertex_linear[0].as_slice(), &amat, &bvec, n)
    }

    fn solve_epigraph(&self, settings: &SolverSettings) -> Result<CondensedSolution> {
        let n = self.dim();
        let tau = n;
        let mut p = Vec::new();
        upper_triplets(&self.hessian, 0, &mut p);
        let mut q = vec![0.0; n + 1];
        q[tau] = 1.0;
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut push_dense = |row: &[f64], extra: Option<(usize, f64)>, rhs: f64, a: &mut Vec<(usize, usize, f64)>| {
            let r = b.len();
            for (j, v) in row.iter().enumerate() {
                if *v != 0.0 {
                    a.push((r, j, *v));
                }
            }
            if let Some((j, v)) = extra {
                a.push((r, j, v));
            }
            b.push(rhs);
        };
        for (l, k) in self.vertex_linear.iter().zip(&self.vertex_constant) {
            push_dense(l.as_slice(), Some((tau, -1.0)), -k, &mut a);
        }
        for r in 0..self.ineq.nrows() {
            let row: Vec<f64> = self.ineq.row(r).iter().cloned().collect();
            push_dense(&row, None, self.ineq_rhs[r], &mut a);
        }
        for i in 0..self.n_u {
            let r = b.len();
            a.push((r, i, 1.0));
            b.push(self.u_max);
            a.push((r + 1, i, -1.0));
            b.push(-self.u_min);
        }
        let rows = b.len();
        let raw = RawProblem { n: n + 1, p, q, a, b, cones: vec![Cone::Nonnegative(rows)] };
        let sol = solve_raw(&raw, settings)?;
        let x = DVector::from_iterator(n, sol.x.iter().take(n).cloned());
        Ok(CondensedSolution { objective: self.cost(&x), x, status: sol.status, iterations: sol.iterations })
    }
}
