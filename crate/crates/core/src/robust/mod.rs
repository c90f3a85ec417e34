//! Robust predictive-control programs: construction, reformulation and solution.

mod condensed;
mod conic;
mod qp;
mod reformulate;
mod solver;

pub use condensed::{condense, CondensedBackend, CondensedProgram, CondensedSolution, QpFactor};
pub use conic::{to_conic, worst_case_cost, Cone, ConicProgram};
pub use qp::{
    build_model_qp, build_robust_qp, pseudo_inverse_predictor, ControllerWeights, DeepcQpTemplate, HankelPredictor,
    IniWindow, ModelPrediction, RobustQp, SharedTemplate, SpacingSpec, VariableLayout,
};
pub use reformulate::{duality_reformulate, program_size, reformulate, vertex_reformulate, ReformulatedProgram, RobustMethod};
pub use solver::{solve_conic, Backend, ConicSolution, SolveStatus, SolverSettings, SOLVER_ENV};

/// `(u - w)^2` with one input in `[-5, 5]`, one knot and the spacing `u + w`
/// capped at `upper`.
#[cfg(test)]
pub(crate) fn toy_qp(upper: f64) -> RobustQp {
    use nalgebra::{DMatrix, DVector};
    RobustQp {
        layout: VariableLayout { n_u: 1, n_sigma: 0, n_eps: 1 },
        m: DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]),
        d: DVector::zeros(2),
        c0: 0.0,
        spacing_map: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        spacing_offset: DVector::zeros(1),
        spacing_lower: DVector::from_element(1, -10.0),
        spacing_upper: DVector::from_element(1, upper),
        u_min: -5.0,
        u_max: 5.0,
    }
}
