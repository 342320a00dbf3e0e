//! Minimum ∞-norm solutions of linear equality systems.

use alloc::vec::Vec;

use super::{solve_lp, LpProblem, Solution, Status};
use crate::{Matrix, Vector};

/// `min_x max_g Σ_{j∈g} |x_j|` subject to `A x = b`.
///
/// Each group is one row of the coefficient matrix whose induced ∞-norm is minimised;
/// singleton groups give the vector ∞-norm. Variables outside every group are free.
#[derive(Debug, Clone)]
pub struct InfNormProblem {
    pub a: Matrix,
    pub b: Vector,
    pub groups: Vec<Vec<usize>>,
}

impl InfNormProblem {
    /// Vector ∞-norm over all variables.
    pub fn vector(a: Matrix, b: Vector) -> Self {
        let groups = (0..a.ncols()).map(|j| alloc::vec![j]).collect();
        InfNormProblem { a, b, groups }
    }
}

#[derive(Debug, Clone)]
pub struct InfNormSolution {
    pub status: Status,
    /// Optimal norm `t`; `f64::INFINITY` when the equalities are infeasible.
    pub norm: f64,
    pub witness: Vector,
    /// The underlying epigraph LP solution.
    pub lp: Solution,
}

/// Epigraph reformulation solved by [`solve_lp`].
///
/// Singleton groups use `−t ≤ x_j ≤ t`; larger groups introduce `u_j ≥ |x_j|` and
/// bound `Σ u_j ≤ t`. The LP variables are ordered `[x, u, t]`.
pub fn solve_inf_norm(p: &InfNormProblem) -> InfNormSolution {
    let n = p.a.ncols();
    let multi: Vec<usize> = p
        .groups
        .iter()
        .filter(|g| g.len() > 1)
        .flat_map(|g| g.iter().copied())
        .collect();
    let nu = multi.len();
    let total = n + nu + 1;
    let ti = n + nu;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut aux = 0;
    for g in &p.groups {
        if g.len() == 1 {
            rows.push(alloc::vec![(g[0], 1.0), (ti, -1.0)]);
            rows.push(alloc::vec![(g[0], -1.0), (ti, -1.0)]);
        } else if g.len() > 1 {
            let mut sum = Vec::with_capacity(g.len() + 1);
            for &j in g {
                let u = n + aux;
                aux += 1;
                rows.push(alloc::vec![(j, 1.0), (u, -1.0)]);
                rows.push(alloc::vec![(j, -1.0), (u, -1.0)]);
                sum.push((u, 1.0));
            }
            sum.push((ti, -1.0));
            rows.push(sum);
        }
    }
    let mut k = Matrix::zeros(rows.len(), total);
    for (r, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            k[(r, j)] = v;
        }
    }
    let h = Vector::zeros(rows.len());
    let mut a = Matrix::zeros(p.a.nrows(), total);
    a.view_mut((0, 0), (p.a.nrows(), n)).copy_from(&p.a);
    let mut c = Vector::zeros(total);
    c[ti] = 1.0;
    let lp = solve_lp(&LpProblem::new(c, a, p.b.clone(), k, h));
    match lp.status {
        Status::Optimal => InfNormSolution {
            status: Status::Optimal,
            norm: lp.primal[ti].max(0.0),
            witness: lp.primal.rows(0, n).into_owned(),
            lp,
        },
        s => InfNormSolution {
            status: s,
            norm: f64::INFINITY,
            witness: Vector::zeros(n),
            lp,
        },
    }
}
