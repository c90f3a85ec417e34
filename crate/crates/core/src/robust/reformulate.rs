use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::qp::RobustQp;
use crate::disturbance::{enumerate_vertices, DisturbanceBox};
use crate::error::{config_err, dim_err, Error, Result};

/// How the spacing constraints are made robust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustMethod {
    /// Impose every spacing constraint at every vertex.
    Vertex,
    /// Replace the inner maximization of each spacing row by its LP dual.
    Duality,
}

impl std::str::FromStr for RobustMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vertex" => Ok(Self::Vertex),
            "duality" => Ok(Self::Duality),
            _ => Err(config_err(format!("unknown robust method `{s}`"))),
        }
    }
}

/// Min-max QP with the disturbance set spelled out.
///
/// The cost is always taken as the maximum over the vertices; `method`
/// decides how the spacing constraints treat the knot box.
#[derive(Debug, Clone)]
pub struct ReformulatedProgram {
    pub method: RobustMethod,
    pub qp: RobustQp,
    pub vertices: Vec<DVector<f64>>,
    pub knot_box: DisturbanceBox,
}

impl ReformulatedProgram {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Scalar decision variables of the conic form (epigraph variable included).
    pub fn variable_count(&self) -> usize {
        self.size().0
    }

    /// Constraints counted as one per cone row of linear cones plus one per
    /// second-order cone.
    pub fn constraint_count(&self) -> usize {
        self.size().1
    }

    fn size(&self) -> (usize, usize) {
        let lay = self.qp.layout;
        program_size(self.method, lay.n_u, lay.n_sigma, lay.n_eps, self.qp.spacing_rows(), self.vertex_count())
    }
}

/// `(variables, constraints)` of the conic form for the given sizes and
/// vertex count.
pub fn program_size(
    method: RobustMethod,
    n_u: usize,
    n_sigma: usize,
    n_eps: usize,
    spacing_rows: usize,
    vertices: usize,
) -> (usize, usize) {
    let base = 1 + n_u + n_sigma;
    let inputs = 2 * n_u;
    match method {
        RobustMethod::Vertex => (base, vertices + 2 * spacing_rows * vertices + inputs),
        RobustMethod::Duality => {
            (base + 4 * spacing_rows * n_eps, vertices + spacing_rows * (6 * n_eps + 2) + inputs)
        }
    }
}

fn check_vertex(qp: &RobustQp, w: &DVector<f64>) -> Result<()> {
    if w.len() != qp.layout.n_eps {
        return Err(dim_err(format!("vertex has {} entries, expected {}", w.len(), qp.layout.n_eps)));
    }
    Ok(())
}

/// Robust program that enforces the cost and constraints at the given vertices.
pub fn vertex_reformulate(qp: RobustQp, vertices: Vec<DVector<f64>>) -> Result<ReformulatedProgram> {
    qp.validate()?;
    if vertices.is_empty() {
        return Err(dim_err("at least one vertex is required"));
    }
    for w in &vertices {
        check_vertex(&qp, w)?;
    }
    let ne = qp.layout.n_eps;
    let lower = DVector::from_fn(ne, |i, _| vertices.iter().map(|w| w[i]).fold(f64::INFINITY, f64::min));
    let upper = DVector::from_fn(ne, |i, _| vertices.iter().map(|w| w[i]).fold(f64::NEG_INFINITY, f64::max));
    Ok(ReformulatedProgram { method: RobustMethod::Vertex, qp, vertices, knot_box: DisturbanceBox { lower, upper } })
}

/// Robust program whose spacing constraints use the dual of the box.
pub fn duality_reformulate(qp: RobustQp, knot_box: DisturbanceBox) -> Result<ReformulatedProgram> {
    qp.validate()?;
    if knot_box.len() != qp.layout.n_eps {
        return Err(dim_err("knot box size differs from the disturbance part of the QP"));
    }
    let vertices = enumerate_vertices(&knot_box)?;
    Ok(ReformulatedProgram { method: RobustMethod::Duality, qp, vertices, knot_box })
}

/// Same program with the other treatment of the spacing constraints.
pub fn reformulate(qp: RobustQp, knot_box: &DisturbanceBox, method: RobustMethod) -> Result<ReformulatedProgram> {
    match method {
        RobustMethod::Vertex => {
            let vs = enumerate_vertices(knot_box)?;
            let mut p = vertex_reformulate(qp, vs)?;
            p.knot_box = knot_box.clone();
            Ok(p)
        }
        RobustMethod::Duality => duality_reformulate(qp, knot_box.clone()),
    }
}
