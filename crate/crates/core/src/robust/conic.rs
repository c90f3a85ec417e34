use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::qp::RobustQp;
use super::reformulate::{ReformulatedProgram, RobustMethod};
use crate::error::Result;
use crate::linalg;

/// Cone of a contiguous block of rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Zero(usize),
    Nonnegative(usize),
    SecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::Nonnegative(n) | Cone::SecondOrder(n) => n,
        }
    }
}

/// Conic program in dual form:
/// maximize `b' y` subject to `c - A' y` in the product cone.
///
/// `a_t` stores `A'` as `(row, variable, value)` triplets.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub n_vars: usize,
    pub a_t: Vec<(usize, usize, f64)>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub cones: Vec<Cone>,
    /// Constant to add to `-b' y` to recover the robust cost.
    pub objective_offset: f64,
    /// Range of `y` holding the stacked inputs.
    pub input_range: std::ops::Range<usize>,
    /// Range of `y` holding `col(u, sigma_y)`.
    pub decision_range: std::ops::Range<usize>,
}

impl ConicProgram {
    pub fn n_rows(&self) -> usize {
        self.c.len()
    }

    /// One per zero or nonnegative row plus one per second-order cone.
    pub fn constraint_count(&self) -> usize {
        self.cones
            .iter()
            .map(|c| match c {
                Cone::Zero(n) | Cone::Nonnegative(n) => *n,
                Cone::SecondOrder(_) => 1,
            })
            .sum()
    }

    /// `A' y` as a dense vector.
    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_rows());
        for &(r, v, a) in &self.a_t {
            out[r] += a * y[v];
        }
        out
    }

    /// Largest cone violation of the slack `c - A' y`.
    pub fn max_violation(&self, y: &DVector<f64>) -> f64 {
        let s = &self.c - self.apply(y);
        let mut worst = 0.0f64;
        let mut r = 0;
        for cone in &self.cones {
            let n = cone.dim();
            let seg = s.rows(r, n);
            let v = match cone {
                Cone::Zero(_) => seg.amax(),
                Cone::Nonnegative(_) => seg.iter().map(|x| (-x).max(0.0)).fold(0.0, f64::max),
                Cone::SecondOrder(_) => (seg.rows(1, n - 1).norm() - seg[0]).max(0.0),
            };
            worst = worst.max(v);
            r += n;
        }
        worst
    }

    /// Write the program as plain text: a header describing the layout,
    /// then dimensions, the offset, the cone list, `b`, `c` and the
    /// triplets of `A` (variable index, row index, value; 0-based).
    pub fn export(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# conic program: maximize b'y subject to c - A'y in K\n");
        s.push_str("# sections in order: dims, offset, cones, b, c, A\n");
        s.push_str("# dims <variables> <rows> <nonzeros>; A lines are <variable> <row> <value>, 0-based\n");
        let _ = writeln!(s, "dims {} {} {}", self.n_vars, self.n_rows(), self.a_t.len());
        let _ = writeln!(s, "offset {:.17e}", self.objective_offset);
        let _ = writeln!(s, "cones {}", self.cones.len());
        for c in &self.cones {
            let _ = match c {
                Cone::Zero(n) => writeln!(s, "zero {n}"),
                Cone::Nonnegative(n) => writeln!(s, "nonneg {n}"),
                Cone::SecondOrder(n) => writeln!(s, "soc {n}"),
            };
        }
        s.push_str("b\n");
        for v in self.b.iter() {
            let _ = writeln!(s, "{v:.17e}");
        }
        s.push_str("c\n");
        for v in self.c.iter() {
            let _ = writeln!(s, "{v:.17e}");
        }
        s.push_str("A\n");
        for &(r, v, a) in &self.a_t {
            let _ = writeln!(s, "{v} {r} {a:.17e}");
        }
        s
    }
}

struct RowBuilder {
    a_t: Vec<(usize, usize, f64)>,
    c: Vec<f64>,
    cones: Vec<Cone>,
}

impl RowBuilder {
    fn row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let r = self.c.len();
        for (v, a) in entries {
            if a != 0.0 {
                self.a_t.push((r, v, a));
            }
        }
        self.c.push(rhs);
    }

    fn close(&mut self, start: usize, cone: fn(usize) -> Cone) {
        let n = self.c.len() - start;
        if n > 0 {
            self.cones.push(cone(n));
        }
    }
}

/// Convert a reformulated robust program to the dual conic form.
///
/// Variables are `y = col(t, u, sigma_y)` followed, for the duality method,
/// by the multipliers of all upper spacing rows and then of all lower rows.
pub fn to_conic(prog: &ReformulatedProgram) -> Result<ConicProgram> {
    let qp: &RobustQp = &prog.qp;
    let lay = qp.layout;
    let nd = lay.decision();
    let ne = lay.n_eps;
    let ns = qp.spacing_rows();
    let gamma = linalg::psd_factor(&qp.m)?;
    let gd = gamma.columns(0, nd).into_owned();
    let gw = gamma.columns(nd, ne).into_owned();
    // Complete the square, x'Mx + d'x = |Gx + r|^2 + d_rest'x - |r|^2, so the
    // epigraph does not carry a large linear term that cancels the quadratic.
    let half = &qp.d * 0.5;
    let shift = DVector::from_fn(gamma.nrows(), |k, _| gamma.row(k).transpose().dot(&half) / gamma.row(k).norm_squared());
    let d_rest = &qp.d - gamma.transpose() * &shift * 2.0;
    let dd = d_rest.rows(0, nd).into_owned();
    let dw = d_rest.rows(nd, ne).into_owned();
    let pd = qp.spacing_map.columns(0, nd).into_owned();
    let pw = qp.spacing_map.columns(nd, ne).into_owned();
    let t = 0usize;
    let xoff = 1usize;
    let n_lambda = match prog.method {
        RobustMethod::Vertex => 0,
        RobustMethod::Duality => 4 * ns * ne,
    };
    let n_vars = 1 + nd + n_lambda;
    // index of lambda_{l, side}, side 0 upper / 1 lower
    let lam = |side: usize, l: usize, k: usize| 1 + nd + side * 2 * ns * ne + l * 2 * ne + k;
    let mut rb = RowBuilder { a_t: Vec::new(), c: Vec::new(), cones: Vec::new() };
    let drow = |m: &DMatrix<f64>, r: usize, sign: f64| -> Vec<(usize, f64)> {
        (0..m.ncols()).map(|j| (xoff + j, sign * m[(r, j)])).collect()
    };

    if prog.method == RobustMethod::Duality {
        // A_eps' lambda = p_eps with A_eps = col(I, -I)
        for l in 0..ns {
            let start = rb.c.len();
            for side in 0..2 {
                let sign = if side == 0 { 1.0 } else { -1.0 };
                for k in 0..ne {
                    rb.row([(lam(side, l, k), 1.0), (lam(side, l, ne + k), -1.0)], sign * pw[(l, k)]);
                }
            }
            rb.close(start, Cone::Zero);
        }
        let start = rb.c.len();
        for v in (1 + nd)..n_vars {
            rb.row([(v, -1.0)], 0.0);
        }
        rb.close(start, Cone::Nonnegative);
    }

    // input bounds
    let start = rb.c.len();
    for i in 0..lay.n_u {
        rb.row([(xoff + i, 1.0)], qp.u_max);
    }
    for i in 0..lay.n_u {
        rb.row([(xoff + i, -1.0)], -qp.u_min);
    }
    rb.close(start, Cone::Nonnegative);

    match prog.method {
        RobustMethod::Vertex => {
            for w in &prog.vertices {
                let shift = &pw * w + &qp.spacing_offset;
                let start = rb.c.len();
                for l in 0..ns {
                    rb.row(drow(&pd, l, 1.0), qp.spacing_upper[l] - shift[l]);
                }
                for l in 0..ns {
                    rb.row(drow(&pd, l, -1.0), shift[l] - qp.spacing_lower[l]);
                }
                rb.close(start, Cone::Nonnegative);
            }
        }
        RobustMethod::Duality => {
            let b_up = &prog.knot_box.upper;
            let b_lo = &prog.knot_box.lower;
            for l in 0..ns {
                let start = rb.c.len();
                let mut up = drow(&pd, l, 1.0);
                let mut lo = drow(&pd, l, -1.0);
                for k in 0..ne {
                    up.push((lam(0, l, k), b_up[k]));
                    up.push((lam(0, l, ne + k), -b_lo[k]));
                    lo.push((lam(1, l, k), b_up[k]));
                    lo.push((lam(1, l, ne + k), -b_lo[k]));
                }
                rb.row(up, qp.spacing_upper[l] - qp.spacing_offset[l]);
                rb.row(lo, qp.spacing_offset[l] - qp.spacing_lower[l]);
                rb.close(start, Cone::Nonnegative);
            }
        }
    }

    // epigraph cones: |(2 (G x + r), t - d'x - 1)| <= t - d'x + 1
    for w in &prog.vertices {
        let start = rb.c.len();
        let dw_w = dw.dot(w);
        let gw_w = &gw * w + &shift;
        let mut head: Vec<(usize, f64)> = vec![(t, -1.0)];
        head.extend((0..nd).map(|j| (xoff + j, dd[j])));
        rb.row(head.clone(), 1.0 - dw_w);
        for r in 0..gd.nrows() {
            rb.row(drow(&gd, r, -2.0), 2.0 * gw_w[r]);
        }
        rb.row(head, -1.0 - dw_w);
        rb.close(start, Cone::SecondOrder);
    }

    let mut b = DVector::zeros(n_vars);
    b[t] = -1.0;
    Ok(ConicProgram {
        n_vars,
        a_t: rb.a_t,
        b,
        c: DVector::from_vec(rb.c),
        cones: rb.cones,
        objective_offset: qp.c0 - shift.norm_squared(),
        input_range: xoff..xoff + lay.n_u,
        decision_range: xoff..xoff + nd,
    })
}

/// Evaluate the worst-case cost of `xd` over the program's vertices.
pub fn worst_case_cost(prog: &ReformulatedProgram, xd: &DVector<f64>) -> f64 {
    prog.vertices
        .iter()
        .map(|w| prog.qp.objective(&prog.qp.join(xd, w)))
        .fold(f64::NEG_INFINITY, f64::max)
}
