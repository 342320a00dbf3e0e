use alloc::vec::Vec;

use super::{
    action_polyhedron, is_action_safe, require_lin, ActionPolyhedron, SafeActionSpec, SafeSetMode, SafeguardResult,
    SolverStats, TransitionLinearization,
};
use crate::error::{Error, Result};
use crate::linalg::{column_projector, null_space, vstack};
use crate::optkit::{pseudoinverse, solve_qp, solve_qp_from, QpProblem, Solution, Status, ACT_TOL};
use crate::{Matrix, Vector};

/// Boundary projection: the nearest safe action in the Euclidean norm.
///
/// Safe actions are returned unchanged with an identity Jacobian. Unsafe actions are
/// projected by a QP over the lifted safe-set polyhedron; an explicit set yields the
/// projector onto the generators whose coefficients stay strictly inside `(−1, 1)`, an
/// induced set the projector onto the face of the polyhedron containing the solution.
pub fn bp_project(spec: &SafeActionSpec, lin: Option<&TransitionLinearization>, a: &Vector) -> Result<SafeguardResult> {
    let lin = require_lin(spec, lin)?;
    let mut stats = SolverStats::default();
    if is_action_safe(spec, lin, a)?.0 {
        return Ok(SafeguardResult::unchanged(a, stats));
    }
    let poly = action_polyhedron(spec, lin)?;
    let sol = project(&poly, a, spec)?;
    stats.qp_solves += 1;
    stats.iterations += sol.iterations as u32;
    let d = poly.dim;
    let a_s = sol.primal.rows(0, d).into_owned();
    let jacobian = match &spec.mode {
        SafeSetMode::Explicit(z) => {
            let inactive: Vec<usize> = (0..z.num_generators())
                .filter(|&i| sol.primal[d + i].abs() < 1.0 - ACT_TOL)
                .collect();
            bp_jacobian(z.generators(), &inactive, false)
        }
        SafeSetMode::Induced { .. } => face_projector(&poly, &sol.primal),
    };
    Ok(SafeguardResult::new(a, a_s, jacobian, stats))
}

/// `min ‖x_a − a‖²` over the polyhedron.
pub(crate) fn project(poly: &ActionPolyhedron, a: &Vector, spec: &SafeActionSpec) -> Result<Solution> {
    let d = poly.dim;
    let n = poly.vars();
    let mut q_mat = Matrix::zeros(n, n);
    let mut q = Vector::zeros(n);
    for i in 0..d {
        q_mat[(i, i)] = 2.0;
        q[i] = -2.0 * a[i];
    }
    let qp = QpProblem {
        q_mat,
        q,
        a: poly.eq_a.clone(),
        b: poly.eq_b.clone(),
        k: poly.ineq_a.clone(),
        h: poly.ineq_b.clone(),
    };
    let sol = match &spec.mode {
        SafeSetMode::Explicit(z) => {
            let mut start = Vector::zeros(n);
            start.rows_mut(0, d).copy_from(z.center());
            solve_qp_from(&qp, &start)
        }
        SafeSetMode::Induced { .. } => solve_qp(&qp),
    };
    match sol.status {
        Status::Optimal => Ok(sol),
        Status::Infeasible => Err(Error::SafetyFault("the safe action set is empty".into())),
        s => Err(Error::Solver(alloc::format!("boundary projection QP ended with {s:?}"))),
    }
}

/// Closed form `G_I (G_Iᵀ G_I)† G_Iᵀ` over the inactive generator columns `I`.
///
/// Safe actions get the identity; an empty inactive set gives the zero matrix.
pub fn bp_jacobian(generators: &Matrix, inactive: &[usize], safe: bool) -> Matrix {
    let d = generators.nrows();
    if safe {
        return Matrix::identity(d, d);
    }
    if inactive.is_empty() {
        return Matrix::zeros(d, d);
    }
    let gi = Matrix::from_fn(d, inactive.len(), |r, k| generators[(r, inactive[k])]);
    &gi * pseudoinverse(&(gi.transpose() * &gi)) * gi.transpose()
}

/// Orthogonal projector onto the action-space directions that keep every active
/// constraint of the polyhedron tight at `x`.
pub(crate) fn face_projector(poly: &ActionPolyhedron, x: &Vector) -> Matrix {
    let slack = &poly.ineq_b - &poly.ineq_a * x;
    let active: Vec<usize> = (0..slack.len()).filter(|&i| slack[i] <= ACT_TOL).collect();
    let ka = Matrix::from_fn(active.len(), poly.vars(), |r, j| poly.ineq_a[(active[r], j)]);
    let c = vstack(&[&poly.eq_a, &ka]);
    let basis = null_space(&c);
    let tangent = basis.rows(0, poly.dim).into_owned();
    column_projector(&tangent)
}

/// Dimension of the action-space face through `x`.
pub(crate) fn face_dimension(poly: &ActionPolyhedron, x: &Vector) -> usize {
    let p = face_projector(poly, x);
    libm::round((0..p.nrows()).map(|i| p[(i, i)]).sum::<f64>()) as usize
}
