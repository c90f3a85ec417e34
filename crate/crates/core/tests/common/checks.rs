//! Measurements behind the accuracy criteria, shared by the ordinary tests
//! and the acceptance report.

use super::*;
use mixflow::data::{collect_linear_data, min_data_length, partition_hankel};
use mixflow::disturbance::DisturbanceBox;
use mixflow::robust::{
    pseudo_inverse_predictor, reformulate, solve_conic, to_conic, Backend, ConicProgram, IniWindow, RobustMethod,
    SolverSettings,
};
use mixflow::traffic::{linearize, Scope, TrafficConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn svd_pinv(h: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = h.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut out = DMatrix::zeros(h.ncols(), h.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > 1e-10 * smax {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

/// Largest output residual of the Hankel predictor over 25 random
/// trajectories of the linear model of two subsystems.
pub fn lti_worst_residual() -> f64 {
    let config = TrafficConfig::default();
    let (t_ini, horizon) = (20, 50);
    let mut worst = 0.0f64;
    for scope in [Scope::Subsystem(0), Scope::Subsystem(3)] {
        let model = linearize(&config, 15.0, scope);
        let len = min_data_length(1, model.state_dim(), t_ini + horizon) + 300;
        let data = collect_linear_data(&model, len, 9).unwrap();
        let predictor = pseudo_inverse_predictor(partition_hankel(&data, t_ini, horizon).unwrap());
        let mut r = rng(31);
        for _ in 0..25 {
            let x0 = uniform_vec(&mut r, model.state_dim(), 1.0);
            let steps = t_ini + horizon;
            let u: Vec<DVector<f64>> = (0..steps).map(|_| uniform_vec(&mut r, 1, 1.0)).collect();
            let e: Vec<f64> = (0..steps).map(|_| r.gen_range(-1.0..=1.0)).collect();
            let y = lti_rollout(&model, &x0, &u, &e);
            let ini = IniWindow {
                u: stack(&u[..t_ini]),
                eps: DVector::from_column_slice(&e[..t_ini]),
                y: stack(&y[..t_ini]),
            };
            let b = predictor.regressor_rhs(&ini, &stack(&u[t_ini..]), &DVector::from_column_slice(&e[t_ini..]));
            worst = worst.max((predictor.predict(&b) - stack(&y[t_ini..])).amax());
        }
    }
    worst
}

/// Largest relative gap between the quadratic form and the cost evaluated
/// through an SVD pseudo-inverse, over 100 random instances.
pub fn objective_identity_worst() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng(1000 + seed);
        let t_ini = r.gen_range(2..5);
        let horizon = r.gen_range(4..10);
        let period = r.gen_range(1..=horizon / 2);
        let inst = data_instance(seed, t_ini, horizon, period);
        let qp = inst.qp();
        let lay = qp.layout;
        let pinv = svd_pinv(&inst.blocks.stacked_regressor());
        for _ in 0..3 {
            let x = uniform_vec(&mut r, lay.total(), 1.0);
            let u = x.rows(0, lay.n_u).into_owned();
            let sigma = x.rows(lay.n_u, lay.n_sigma).into_owned();
            let knots = x.rows(lay.n_u + lay.n_sigma, lay.n_eps).into_owned();
            let eps = &inst.downsampling.matrix * &knots;
            let b = stack(&[inst.ini.u.clone(), inst.ini.eps.clone(), &inst.ini.y + &sigma, u.clone(), eps]);
            let g = &pinv * b;
            let y = &inst.blocks.y_f * &g;
            let w = &inst.weights;
            let direct = u.dot(&(&w.r * &u))
                + y.dot(&(&w.q * &y))
                + w.lambda_g * g.norm_squared()
                + w.lambda_y * sigma.norm_squared();
            worst = worst.max(rel(qp.objective(&x), direct));
        }
    }
    worst
}

pub fn solve_checked(prog: &ConicProgram) -> (f64, DVector<f64>) {
    let sol = solve_conic(prog, Backend::Clarabel, &SolverSettings::default()).unwrap();
    assert!(sol.status.is_usable(), "status {:?}", sol.status);
    assert!(prog.max_violation(&sol.y) < 1e-7);
    (sol.objective, sol.inputs(prog))
}

/// Worst disagreements between the two robust forms and the dense oracle.
#[derive(Debug, Default, Clone, Copy)]
pub struct Agreement {
    pub instances: usize,
    /// Relative optimum gap, vertex form against the oracle.
    pub vertex_vs_oracle: f64,
    pub duality_vs_oracle: f64,
    pub vertex_vs_duality: f64,
    /// Absolute gap of the first input, vertex against duality.
    pub first_input: f64,
    pub first_input_vs_oracle: f64,
    pub max_knots: usize,
    pub max_horizon: usize,
}

/// Solve 50 small data-driven instances in both forms and by the barrier oracle.
pub fn method_agreement() -> Agreement {
    let mut a = Agreement::default();
    for seed in 0..50u64 {
        let mut r = rng(2000 + seed);
        let t_ini = r.gen_range(2..4);
        let (horizon, period) = [(4, 2), (5, 3), (6, 3), (3, 1)][r.gen_range(0..4)];
        let inst = data_instance(seed + 77, t_ini, horizon, period);
        let mut qp = inst.qp();
        qp.u_min = -r.gen_range(0.05..1.0);
        qp.u_max = r.gen_range(0.05..1.0);
        let bx = random_box(&mut r, qp.layout.n_eps);
        let corners = box_corners(&bx.lower, &bx.upper);
        bounds_around_origin(&mut r, &mut qp, &corners, 0.5);

        let oracle = minmax_barrier(&qp, &corners);
        let (jv, uv) = solve_checked(&to_conic(&reformulate(qp.clone(), &bx, RobustMethod::Vertex).unwrap()).unwrap());
        let (jd, ud) = solve_checked(&to_conic(&reformulate(qp.clone(), &bx, RobustMethod::Duality).unwrap()).unwrap());
        a.instances += 1;
        a.vertex_vs_oracle = a.vertex_vs_oracle.max(rel(jv, oracle.objective));
        a.duality_vs_oracle = a.duality_vs_oracle.max(rel(jd, oracle.objective));
        a.vertex_vs_duality = a.vertex_vs_duality.max(rel(jv, jd));
        a.first_input = a.first_input.max((uv[0] - ud[0]).abs());
        a.first_input_vs_oracle = a.first_input_vs_oracle.max((uv[0] - oracle.x[0]).abs());
        a.max_knots = a.max_knots.max(qp.layout.n_eps);
        a.max_horizon = a.max_horizon.max(horizon);
    }
    a
}

pub fn vertex_counts(n: usize, n_eps: usize, m: usize, t_ini: usize) -> (usize, usize) {
    (1 + n + (m + 2) * t_ini, (1 << n_eps) + n * (1 << (n_eps + 1)) + 2 * n)
}

pub fn duality_counts(n: usize, n_eps: usize, m: usize, t_ini: usize) -> (usize, usize) {
    (1 + n + (m + 2) * t_ini + 4 * n * n_eps, (1 << n_eps) + 2 * n * (3 * n_eps + 1) + 2 * n)
}

/// Sweep the size grid and return `(cases checked, mismatch descriptions)`.
pub fn count_grid() -> (usize, Vec<String>) {
    let mut r = rng(8);
    let mut checked = 0;
    let mut bad = Vec::new();
    for &n in &[3usize, 10, 50] {
        for &n_eps in &[1usize, 2, 4, 6] {
            for &m in &[0usize, 1, 3] {
                for &t_ini in &[1usize, 5, 20] {
                    let bx = DisturbanceBox::new(DVector::from_element(n_eps, -1.0), DVector::from_element(n_eps, 1.0))
                        .unwrap();
                    let corners = box_corners(&bx.lower, &bx.upper);
                    let qp = random_qp(&mut r, n, (m + 2) * t_ini, n_eps, n, &corners);
                    for (method, expect) in [
                        (RobustMethod::Vertex, vertex_counts(n, n_eps, m, t_ini)),
                        (RobustMethod::Duality, duality_counts(n, n_eps, m, t_ini)),
                    ] {
                        let prog = reformulate(qp.clone(), &bx, method).unwrap();
                        let conic = to_conic(&prog).unwrap();
                        let cone_rows: usize = conic.cones.iter().map(|c| c.dim()).sum();
                        checked += 1;
                        let got = [(prog.variable_count(), prog.constraint_count()), (conic.n_vars, conic.constraint_count())];
                        if got.iter().any(|g| *g != expect) || cone_rows != conic.n_rows() {
                            bad.push(format!("{method:?} N={n} n_eps={n_eps} m={m} t_ini={t_ini}: {got:?} vs {expect:?}"));
                        }
                    }
                }
            }
        }
    }
    (checked, bad)
}
