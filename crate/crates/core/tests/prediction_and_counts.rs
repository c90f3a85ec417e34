mod common;

use common::checks::{self, duality_counts, vertex_counts};
use common::*;
use mixflow::disturbance::DisturbanceBox;
use mixflow::robust::{reformulate, to_conic, RobustMethod};
use nalgebra::DVector;

#[test]
fn hankel_predictor_is_exact_on_the_linear_plant() {
    let worst = checks::lti_worst_residual();
    assert!(worst < 1e-8, "largest residual {worst:e}");
}

#[test]
fn program_sizes_follow_the_closed_forms() {
    let (checked, bad) = checks::count_grid();
    assert_eq!(checked, 216);
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn data_driven_program_has_the_same_sizes() {
    let inst = data_instance(2, 3, 8, 2);
    let qp = inst.qp();
    let n_eps = inst.downsampling.knot_count();
    assert_eq!(n_eps, 5);
    let bx = DisturbanceBox::new(DVector::from_element(n_eps, -0.2), DVector::from_element(n_eps, 0.2)).unwrap();
    // subsystem with two followers: four outputs per step
    let m = inst.model.output_dim() - 2;
    for (method, expect) in [(RobustMethod::Vertex, vertex_counts(8, n_eps, m, 3)), (RobustMethod::Duality, duality_counts(8, n_eps, m, 3))] {
        let conic = to_conic(&reformulate(qp.clone(), &bx, method).unwrap()).unwrap();
        assert_eq!((conic.n_vars, conic.constraint_count()), expect);
    }
}

#[test]
fn largest_default_program_has_6564_vertex_constraints() {
    assert_eq!(vertex_counts(50, 6, 3, 20).1, 6564);
}
