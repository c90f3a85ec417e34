//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

pub mod checks;

use mixflow::robust::{RobustQp, VariableLayout};
use mixflow::traffic::StateSpace;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, half: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-half..=half))
}

pub fn uniform_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, half: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-half..=half))
}

/// Outputs of `model` after each step, stacked, starting from `x0`.
pub fn lti_rollout(model: &StateSpace, x0: &DVector<f64>, u: &[DVector<f64>], eps: &[f64]) -> Vec<DVector<f64>> {
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(u.len());
    for (uk, ek) in u.iter().zip(eps) {
        x = &model.a * &x + &model.b * uk + &model.h * *ek;
        out.push(&model.c * &x);
    }
    out
}

pub fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(parts.iter().map(|p| p.len()).sum(), parts.iter().flat_map(|p| p.iter().cloned()))
}

/// Random strictly feasible robust QP with the given sizes. The point
/// `x = 0` satisfies every constraint with margin at every box vertex.
pub fn random_qp(
    rng: &mut ChaCha8Rng,
    n_u: usize,
    n_sigma: usize,
    n_eps: usize,
    spacing_rows: usize,
    vertices: &[DVector<f64>],
) -> RobustQp {
    let layout = VariableLayout { n_u, n_sigma, n_eps };
    let n = layout.total();
    let g = uniform_mat(rng, n + 2, n, 1.0);
    let mut m = g.transpose() * g;
    for i in 0..n_u {
        m[(i, i)] += 0.1;
    }
    let spacing_map = uniform_mat(rng, spacing_rows, n, 1.0);
    let spacing_offset = uniform_vec(rng, spacing_rows, 0.5);
    let mut lower = DVector::from_element(spacing_rows, f64::INFINITY);
    let mut upper = DVector::from_element(spacing_rows, f64::NEG_INFINITY);
    for w in vertices {
        let mut x = DVector::zeros(n);
        x.rows_mut(n - n_eps, n_eps).copy_from(w);
        let s = &spacing_map * &x + &spacing_offset;
        for r in 0..spacing_rows {
            lower[r] = lower[r].min(s[r]);
            upper[r] = upper[r].max(s[r]);
        }
    }
    let margin_lo = DVector::from_fn(spacing_rows, |_, _| rng.gen_range(0.05..0.6));
    let margin_hi = DVector::from_fn(spacing_rows, |_, _| rng.gen_range(0.05..0.6));
    RobustQp {
        layout,
        m,
        d: uniform_vec(rng, n, 2.0),
        c0: rng.gen_range(0.0..2.0),
        spacing_map,
        spacing_offset,
        spacing_lower: lower - margin_lo,
        spacing_upper: upper + margin_hi,
        u_min: -rng.gen_range(0.3..1.5),
        u_max: rng.gen_range(0.3..1.5),
    }
}

/// Box vertices by binary counting, independent of the library's enumeration.
pub fn box_corners(lower: &DVector<f64>, upper: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = lower.len();
    let free: Vec<usize> = (0..n).filter(|&i| upper[i] > lower[i]).collect();
    (0..1usize << free.len())
        .map(|mask| {
            let mut v = lower.clone();
            for (b, &i) in free.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    v[i] = upper[i];
                }
            }
            v
        })
        .collect()
}

/// Result of the dense min-max oracle.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub x: DVector<f64>,
    pub objective: f64,
}

/// `min_x max_j f(x, w_j)` subject to the spacing band at every vertex and
/// the input box, solved by a log-barrier method on the epigraph form with
/// dense Newton steps. Starts from `x = 0`, which must be strictly feasible.
pub fn minmax_barrier(qp: &RobustQp, vertices: &[DVector<f64>]) -> OracleSolution {
    let nd = qp.layout.n_u + qp.layout.n_sigma;
    let n_all = qp.layout.total();
    let join = |x: &DVector<f64>, w: &DVector<f64>| {
        let mut z = DVector::zeros(n_all);
        z.rows_mut(0, nd).copy_from(x);
        z.rows_mut(nd, w.len()).copy_from(w);
        z
    };
    let cost = |x: &DVector<f64>, w: &DVector<f64>| {
        let z = join(x, w);
        z.dot(&(&qp.m * &z)) + qp.d.dot(&z) + qp.c0
    };
    let cost_grad = |x: &DVector<f64>, w: &DVector<f64>| {
        let z = join(x, w);
        (&qp.m * &z * 2.0 + &qp.d).rows(0, nd).into_owned()
    };
    // Newton runs in whitened coordinates x = T z with T' H T = I; on raw
    // data-driven costs the Newton matrix is otherwise too ill-conditioned.
    let hess_x = qp.m.view((0, 0), (nd, nd)) * 2.0;
    let chol = hess_x.clone().cholesky().expect("positive definite decision Hessian");
    let tmap = chol.l().transpose().try_inverse().expect("invertible factor");
    let hess = tmap.transpose() * &hess_x * &tmap;
    let cost_x = cost;
    let cost = |z: &DVector<f64>, w: &DVector<f64>| cost_x(&(&tmap * z), w);
    let cost_grad = |z: &DVector<f64>, w: &DVector<f64>| tmap.transpose() * cost_grad(&(&tmap * z), w);

    // linear rows a'x <= b over x
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let p_d = qp.spacing_map.columns(0, nd).into_owned();
    for w in vertices {
        let fixed = qp.spacing_map.columns(nd, w.len()) * w + &qp.spacing_offset;
        for r in 0..qp.spacing_map.nrows() {
            let a = tmap.transpose() * p_d.row(r).transpose();
            rows.push((a.clone(), qp.spacing_upper[r] - fixed[r]));
            rows.push((-a, fixed[r] - qp.spacing_lower[r]));
        }
    }
    for i in 0..qp.layout.n_u {
        let e = tmap.row(i).transpose();
        rows.push((e.clone(), qp.u_max));
        rows.push((-e, -qp.u_min));
    }

    let n = nd + 1;
    let mut x = DVector::zeros(nd);
    let mut t = vertices.iter().map(|w| cost(&x, w)).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let n_cons = (vertices.len() + rows.len()) as f64;
    // barrier value with the linear term measured from `t_ref`, so large
    // costs do not swamp the decrease at high `s`
    let phi = |x: &DVector<f64>, t: f64, s: f64, t_ref: f64| -> f64 {
        let mut v = s * (t - t_ref);
        for w in vertices {
            let g = t - cost(x, w);
            if g <= 0.0 {
                return f64::INFINITY;
            }
            v -= g.ln();
        }
        for (a, b) in &rows {
            let g = b - a.dot(x);
            if g <= 0.0 {
                return f64::INFINITY;
            }
            v -= g.ln();
        }
        v
    };
    let scale = 1.0 + t.abs();
    // a small first weight keeps the damped Newton phase short
    let mut s = 1.0 / scale;
    while n_cons / s > 1e-12 * scale {
        for _ in 0..1000 {
            let mut grad = DVector::zeros(n);
            let mut h = DMatrix::zeros(n, n);
            grad[nd] = s;
            for w in vertices {
                let g = t - cost(&x, w);
                let mut dg = DVector::zeros(n);
                dg.rows_mut(0, nd).copy_from(&(-cost_grad(&x, w)));
                dg[nd] = 1.0;
                grad -= &dg / g;
                h += &dg * dg.transpose() / (g * g);
                let mut inner = DMatrix::zeros(n, n);
                inner.view_mut((0, 0), (nd, nd)).copy_from(&hess);
                h += inner / g;
            }
            for (a, b) in &rows {
                let g = b - a.dot(&x);
                let mut da = DVector::zeros(n);
                da.rows_mut(0, nd).copy_from(a);
                grad += &da / g;
                h += &da * da.transpose() / (g * g);
            }
            let step = match h.clone().cholesky() {
                Some(c) => c.solve(&(-&grad)),
                None => h.lu().solve(&(-&grad)).expect("Newton system"),
            };
            let decrement = -grad.dot(&step);
            // stop once the remaining barrier gap is negligible on the cost scale
            if decrement / 2.0 < 1e-10 || decrement / s < 1e-14 * scale {
                break;
            }
            let f0 = phi(&x, t, s, t);
            let mut alpha = 1.0;
            loop {
                let xn = &x + step.rows(0, nd) * alpha;
                let tn = t + step[nd] * alpha;
                if phi(&xn, tn, s, t) <= f0 - 0.25 * alpha * decrement {
                    x = xn;
                    t = tn;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-10 {
                    break;
                }
            }
            if alpha < 1e-10 {
                break;
            }
        }
        s *= 8.0;
    }
    let objective = vertices.iter().map(|w| cost(&x, w)).fold(f64::NEG_INFINITY, f64::max);
    OracleSolution { x: &tmap * x, objective }
}

/// `max b'y` subject to `A y <= c`, by checking every basis. Returns `None`
/// when no basic point is feasible. Meant for a handful of variables.
pub fn lp_by_bases(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let (m, n) = a.shape();
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let sub = DMatrix::from_fn(n, n, |i, j| a[(idx[i], j)]);
        let rhs = DVector::from_fn(n, |i, _| c[idx[i]]);
        if sub.determinant().abs() > 1e-9 {
            if let Some(y) = sub.lu().solve(&rhs) {
                let slack = c - a * &y;
                if slack.min() >= -1e-9 {
                    let v = b.dot(&y);
                    if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                        best = Some((y, v));
                    }
                }
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < m - n + i {
                idx[i] += 1;
                for j in i + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Replace the spacing band of `qp` with one that holds at `x = 0` for every
/// vertex, with random margins.
pub fn bounds_around_origin(rng: &mut ChaCha8Rng, qp: &mut RobustQp, vertices: &[DVector<f64>], max_margin: f64) {
    let n = qp.layout.total();
    let ne = qp.layout.n_eps;
    let rows = qp.spacing_map.nrows();
    let mut lower = DVector::from_element(rows, f64::INFINITY);
    let mut upper = DVector::from_element(rows, f64::NEG_INFINITY);
    for w in vertices {
        let mut x = DVector::zeros(n);
        x.rows_mut(n - ne, ne).copy_from(w);
        let s = &qp.spacing_map * &x + &qp.spacing_offset;
        for r in 0..rows {
            lower[r] = lower[r].min(s[r]);
            upper[r] = upper[r].max(s[r]);
        }
    }
    for r in 0..rows {
        lower[r] -= rng.gen_range(0.02..max_margin);
        upper[r] += rng.gen_range(0.02..max_margin);
    }
    qp.spacing_lower = lower;
    qp.spacing_upper = upper;
}

/// Random box with roughly one in four coordinates pinned.
pub fn random_box(rng: &mut ChaCha8Rng, n: usize) -> mixflow::disturbance::DisturbanceBox {
    let lower = uniform_vec(rng, n, 0.5);
    let upper = DVector::from_fn(n, |i, _| if rng.gen_bool(0.25) { lower[i] } else { lower[i] + rng.gen_range(0.05..0.8) });
    mixflow::disturbance::DisturbanceBox::new(lower, upper).expect("ordered box")
}

/// Ingredients of a data-driven robust QP built from noiseless data of the
/// first subsystem's linear model.
pub struct DataInstance {
    pub model: StateSpace,
    pub blocks: mixflow::data::HankelBlocks,
    pub predictor: mixflow::robust::HankelPredictor,
    pub weights: mixflow::robust::ControllerWeights,
    pub downsampling: mixflow::disturbance::Downsampling,
    pub spacing: mixflow::robust::SpacingSpec,
    pub ini: mixflow::robust::IniWindow,
}

pub fn data_instance(seed: u64, t_ini: usize, horizon: usize, period: usize) -> DataInstance {
    use mixflow::data::{collect_linear_data, min_data_length, partition_hankel};
    use mixflow::robust::{pseudo_inverse_predictor, ControllerWeights, IniWindow, SpacingSpec};
    use mixflow::traffic::{linearize, Scope, TrafficConfig};

    let mut r = rng(seed);
    let config = TrafficConfig::default();
    let model = linearize(&config, 15.0, Scope::Subsystem(0));
    let len = 2 * min_data_length(1, model.state_dim(), t_ini + horizon);
    let data = collect_linear_data(&model, len, seed).expect("data");
    let blocks = partition_hankel(&data, t_ini, horizon).expect("blocks");
    let predictor = pseudo_inverse_predictor(blocks.clone());
    let p = model.output_dim();
    let per_step: Vec<f64> = (0..p).map(|_| r.gen_range(0.2..1.5)).collect();
    let weights = ControllerWeights::diagonal(
        &per_step,
        r.gen_range(0.05..0.5),
        1,
        horizon,
        r.gen_range(1.0..20.0),
        r.gen_range(10.0..1e3),
    );
    let downsampling = mixflow::disturbance::Downsampling::new(horizon, period).expect("period");
    let spacing = SpacingSpec { outputs: vec![p - 1], lower: vec![-10.0], upper: vec![10.0] };
    // history from a random trajectory of the model
    let x0 = uniform_vec(&mut r, model.state_dim(), 0.5);
    let u: Vec<DVector<f64>> = (0..t_ini).map(|_| uniform_vec(&mut r, 1, 0.5)).collect();
    let e: Vec<f64> = (0..t_ini).map(|_| r.gen_range(-0.5..=0.5)).collect();
    let y = lti_rollout(&model, &x0, &u, &e);
    let ini = IniWindow { u: stack(&u), eps: DVector::from_vec(e), y: stack(&y) };
    DataInstance { model, blocks, predictor, weights, downsampling, spacing, ini }
}

impl DataInstance {
    pub fn qp(&self) -> RobustQp {
        mixflow::robust::build_robust_qp(
            &self.predictor,
            &self.weights,
            &self.ini,
            &self.downsampling,
            self.spacing.clone(),
            -1.0,
            1.0,
        )
        .expect("qp")
    }
}
