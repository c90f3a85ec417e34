use mixflow::disturbance::{enumerate_vertices, estimate_disturbance, DisturbanceBox, Downsampling, EstimatorKind};
use nalgebra::DVector;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = EstimatorKind> {
    prop_oneof![Just(EstimatorKind::Zero), Just(EstimatorKind::Constant), Just(EstimatorKind::TimeVarying)]
}

fn horizon_and_period() -> impl Strategy<Value = (usize, usize)> {
    (3usize..60).prop_flat_map(|n| (Just(n), 1..=n - 2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn estimated_boxes_are_ordered_and_hold_the_trend(
        k in kind(),
        hist in prop::collection::vec(-3.0f64..3.0, 0..30),
        n in 1usize..60,
    ) {
        let dt = 0.05;
        let b = estimate_disturbance(k, &hist, n, dt);
        prop_assert_eq!(b.len(), n);
        for i in 0..n {
            prop_assert!(b.lower[i] <= b.upper[i]);
        }
        if let (Some(&cur), EstimatorKind::Constant) = (hist.last(), k) {
            prop_assert!(b.contains(&DVector::from_element(n, cur), 1e-12));
        }
        if let (Some(&cur), EstimatorKind::TimeVarying) = (hist.last(), k) {
            let slope = if hist.len() > 1 { (cur - hist[hist.len() - 2]) / dt } else { 0.0 };
            let trend = DVector::from_fn(n, |j, _| cur + slope * (j + 1) as f64 * dt);
            prop_assert!(b.contains(&trend, 1e-9));
        }
    }

    #[test]
    fn interpolation_rows_are_convex_weights((n, p) in horizon_and_period()) {
        let ds = Downsampling::new(n, p).unwrap();
        prop_assert_eq!(ds.matrix.shape(), (n, (n - 2) / p + 2));
        for r in 0..n {
            let row = ds.matrix.row(r);
            prop_assert!(row.iter().all(|&w| w >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        for (j, &k) in ds.knots.iter().enumerate() {
            prop_assert!((ds.matrix[(k, j)] - 1.0).abs() < 1e-12);
        }
        prop_assert_eq!(ds.knots[0], 0);
        prop_assert_eq!(*ds.knots.last().unwrap(), n - 1);
    }

    #[test]
    fn vertex_count_is_two_to_the_free_coordinates(
        lower in prop::collection::vec(-2.0f64..2.0, 1..10),
        widths in prop::collection::vec(prop_oneof![Just(0.0f64), 0.01f64..1.0], 10),
    ) {
        let n = lower.len();
        let lo = DVector::from_vec(lower);
        let hi = DVector::from_fn(n, |i, _| lo[i] + widths[i]);
        let b = DisturbanceBox::new(lo.clone(), hi.clone()).unwrap();
        let free = widths[..n].iter().filter(|&&w| w > 0.0).count();
        let vs = enumerate_vertices(&b).unwrap();
        prop_assert_eq!(vs.len(), 1 << free);
        for v in &vs {
            prop_assert!(b.contains(v, 0.0));
            prop_assert!((0..n).all(|i| v[i] == lo[i] || v[i] == hi[i]));
        }
        for a in 0..vs.len() {
            for c in a + 1..vs.len() {
                prop_assert!(vs[a] != vs[c]);
            }
        }
        prop_assert!(vs.contains(&lo) && vs.contains(&hi));
    }

    #[test]
    fn expanded_knot_vertices_stay_in_the_horizon_box(
        k in kind(),
        hist in prop::collection::vec(-3.0f64..3.0, 2..25),
        (n, p) in (5usize..30).prop_flat_map(|n| (Just(n), 1..=((n - 2).min(8)))),
    ) {
        let full = estimate_disturbance(k, &hist, n, 0.05);
        let ds = Downsampling::new(n, p).unwrap();
        prop_assume!(ds.knot_count() <= 8);
        let knots = ds.reduce_box(&full).unwrap();
        for v in enumerate_vertices(&knots).unwrap() {
            prop_assert!(full.contains(&ds.expand(&v), 1e-9));
        }
    }

    #[test]
    fn box_width_is_monotone_over_the_horizon(
        hist in prop::collection::vec(-3.0f64..3.0, 2..30),
        n in 2usize..60,
    ) {
        let tv = estimate_disturbance(EstimatorKind::TimeVarying, &hist, n, 0.05);
        let cst = estimate_disturbance(EstimatorKind::Constant, &hist, n, 0.05);
        let width = |b: &DisturbanceBox, k: usize| b.upper[k] - b.lower[k];
        for k in 1..n {
            prop_assert!(width(&tv, k) >= width(&tv, k - 1) - 1e-12);
            prop_assert!((width(&cst, k) - width(&cst, 0)).abs() < 1e-12);
        }
    }
}
