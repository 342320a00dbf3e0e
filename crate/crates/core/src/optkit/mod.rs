//! Small dense convex solvers that report dual variables.
//!
//! Every solver returns a [`Solution`] whose multipliers follow one sign convention:
//! for `min f(x)` subject to `A x = b` and `K x ≤ h` the stationarity condition reads
//! `∇f(x) + Aᵀν + Kᵀλ = 0` with `λ ≥ 0`. [`kkt_residuals`] audits a solution against
//! that convention independently of the solver that produced it.

mod infnorm;
mod kkt;
mod logsum;
mod lp;
mod qp;

pub use infnorm::{solve_inf_norm, InfNormProblem, InfNormSolution};
pub use kkt::{kkt_residuals, KktResiduals};
pub use logsum::{maximize_log_sum, LogSumProblem, LogSumSolution};
pub use lp::{solve_lp, LpProblem};
pub use qp::{solve_qp, solve_qp_from, QpProblem};

use crate::{Matrix, Vector};

/// Slack below which an inequality counts as active. Ties resolve to active.
pub const ACT_TOL: f64 = 1e-8;
/// Residual threshold for feasibility and KKT certification.
pub const RESIDUAL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

/// Primal-dual solution of a convex program.
#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    pub primal: Vector,
    /// Multipliers of the equality constraints (ν).
    pub eq_duals: Vector,
    /// Multipliers of the inequality constraints (λ ≥ 0).
    pub ineq_duals: Vector,
    pub objective: f64,
    /// Largest KKT residual at return, `f64::INFINITY` when no point was found.
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl Solution {
    pub(crate) fn failed(status: Status, n: usize, m_eq: usize, m_ineq: usize) -> Self {
        Solution {
            status,
            primal: Vector::zeros(n),
            eq_duals: Vector::zeros(m_eq),
            ineq_duals: Vector::zeros(m_ineq),
            objective: f64::NAN,
            kkt_residual: f64::INFINITY,
            iterations: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// Indices of inequalities whose slack `h_i − K_i x` is at most [`ACT_TOL`].
    pub fn active_set(&self, k: &Matrix, h: &Vector) -> alloc::vec::Vec<usize> {
        let slack = h - k * &self.primal;
        (0..slack.len()).filter(|&i| slack[i] <= ACT_TOL).collect()
    }
}

/// Moore–Penrose pseudoinverse from a singular value decomposition.
///
/// Singular values below `1e-10 · max(σ_max, 1)` are treated as zero.
pub fn pseudoinverse(m: &Matrix) -> Matrix {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Matrix::zeros(c, r);
    }
    let (sv, v, w) = crate::linalg::jacobi_svd(m);
    let max = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    let tol = crate::linalg::RANK_TOL * max.max(1.0);
    let mut out = Matrix::zeros(c, r);
    for k in 0..sv.len() {
        if sv[k] > tol {
            out += v.column(k) * (w.column(k).transpose() / (sv[k] * sv[k]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn pinv_identity_and_diag() {
        let i = Matrix::identity(3, 3);
        assert!(max_abs(&(pseudoinverse(&i) - &i)) < 1e-15);
        let d = Matrix::from_diagonal(&Vector::from_vec(alloc::vec![2.0, 0.0]));
        let expect = Matrix::from_diagonal(&Vector::from_vec(alloc::vec![0.5, 0.0]));
        assert!(max_abs(&(pseudoinverse(&d) - expect)) < 1e-15);
    }

    #[test]
    fn pinv_of_empty() {
        let m = Matrix::zeros(0, 3);
        assert_eq!(pseudoinverse(&m).shape(), (3, 0));
    }
}
