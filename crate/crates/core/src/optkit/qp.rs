//! Primal active-set method for convex quadratic programs.
//!
//! Each iteration solves the equality-constrained subproblem on the current working set
//! in the null space of the working constraints. The Hessian only needs to be positive
//! semidefinite: directions of zero curvature are followed until a constraint blocks
//! them, and reported as unbounded otherwise. The working set is kept linearly
//! independent, so the multipliers read off at a stationary point are unique.

use alloc::vec::Vec;

use super::{kkt_residuals, solve_lp, LpProblem, Solution, Status, ACT_TOL};
use crate::linalg::{null_space, vstack};
use crate::{Matrix, Vector};

const STEP_TOL: f64 = 1e-12;
const MULT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;

/// `min ½ xᵀQx + qᵀx` subject to `A x = b`, `K x ≤ h`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub q_mat: Matrix,
    pub q: Vector,
    pub a: Matrix,
    pub b: Vector,
    pub k: Matrix,
    pub h: Vector,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    fn shapes_ok(&self) -> bool {
        let n = self.n();
        self.q_mat.shape() == (n, n)
            && self.a.ncols() == n
            && self.k.ncols() == n
            && self.a.nrows() == self.b.len()
            && self.k.nrows() == self.h.len()
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.q_mat * x)) + self.q.dot(x)
    }

    fn is_feasible(&self, x: &Vector) -> bool {
        let eq = &self.a * x - &self.b;
        let ineq = &self.k * x - &self.h;
        eq.iter().all(|v| v.abs() <= FEAS_TOL) && ineq.iter().all(|&v| v <= FEAS_TOL)
    }
}

/// Solves the QP, finding a feasible start with a phase-one linear program.
pub fn solve_qp(p: &QpProblem) -> Solution {
    let n = p.n();
    if !p.shapes_ok() {
        return Solution::failed(Status::Infeasible, n, p.a.nrows(), p.k.nrows());
    }
    let lp = LpProblem::new(Vector::zeros(n), p.a.clone(), p.b.clone(), p.k.clone(), p.h.clone());
    let start = solve_lp(&lp);
    if start.status != Status::Optimal {
        let mut s = Solution::failed(Status::Infeasible, n, p.a.nrows(), p.k.nrows());
        s.iterations = start.iterations;
        return s;
    }
    active_set(p, start.primal)
}

/// Solves the QP from a caller-supplied start, falling back to phase one when the
/// start is not feasible.
pub fn solve_qp_from(p: &QpProblem, x0: &Vector) -> Solution {
    if p.shapes_ok() && x0.len() == p.n() && p.is_feasible(x0) {
        active_set(p, x0.clone())
    } else {
        solve_qp(p)
    }
}

fn working_matrix(p: &QpProblem, w: &[usize]) -> Matrix {
    let kw = Matrix::from_fn(w.len(), p.n(), |r, j| p.k[(w[r], j)]);
    vstack(&[&p.a, &kw])
}

fn rank(m: &Matrix) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    m.ncols() - null_space(m).ncols()
}

fn active_set(p: &QpProblem, mut x: Vector) -> Solution {
    let n = p.n();
    let me = p.a.nrows();
    let mi = p.k.nrows();
    let max_iter = 20 * (n + mi) + 100;

    let mut w: Vec<usize> = Vec::new();
    let mut current_rank = rank(&p.a);
    let slack0 = &p.h - &p.k * &x;
    for i in 0..mi {
        if slack0[i] <= ACT_TOL {
            w.push(i);
            let r = rank(&working_matrix(p, &w));
            if r > current_rank {
                current_rank = r;
            } else {
                w.pop();
            }
        }
    }

    let mut iters = 0;
    loop {
        if iters >= max_iter {
            let mut s = finish(p, x, &w, Status::MaxIter);
            s.iterations = iters;
            return s;
        }
        iters += 1;
        let g = &p.q_mat * &x + &p.q;
        let c = working_matrix(p, &w);
        let z = null_space(&c);
        let (step, bounded) = subproblem_step(p, &z, &g);
        let scale = 1.0 + x.amax();
        if step.amax() <= STEP_TOL * scale {
            let mu = crate::linalg::lstsq(&c.transpose(), &(-&g));
            let mut drop: Option<(usize, f64)> = None;
            for (pos, _) in w.iter().enumerate() {
                let l = mu[me + pos];
                if l < -MULT_TOL && drop.map_or(true, |(_, v)| l < v) {
                    drop = Some((pos, l));
                }
            }
            match drop {
                None => {
                    let mut s = finish(p, x, &w, Status::Optimal);
                    s.iterations = iters;
                    return s;
                }
                Some((pos, _)) => {
                    w.remove(pos);
                    continue;
                }
            }
        }
        // Ratio test over constraints outside the working set.
        let mut alpha = if bounded { 1.0 } else { f64::INFINITY };
        let mut blocking = None;
        for i in 0..mi {
            if w.contains(&i) {
                continue;
            }
            let row = p.k.row(i);
            let kp: f64 = row.iter().zip(step.iter()).map(|(a, b)| a * b).sum();
            let norm = row.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if kp > 1e-12 * norm.max(1e-300) {
                let kx: f64 = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                let a_i = (p.h[i] - kx).max(0.0) / kp;
                if a_i < alpha {
                    alpha = a_i;
                    blocking = Some(i);
                }
            }
        }
        if alpha.is_infinite() {
            let mut s = Solution::failed(Status::Unbounded, n, me, mi);
            s.primal = x;
            s.iterations = iters;
            return s;
        }
        x += &step * alpha;
        if let Some(i) = blocking {
            w.push(i);
        }
    }
}

/// Step towards the minimiser of the working subproblem, and whether it is a finite
/// Newton step (`true`) or a descent ray along zero curvature (`false`).
fn subproblem_step(p: &QpProblem, z: &Matrix, g: &Vector) -> (Vector, bool) {
    let n = p.n();
    if z.ncols() == 0 {
        return (Vector::zeros(n), true);
    }
    let hr = z.transpose() * &p.q_mat * z;
    let hr = (&hr + hr.transpose()) * 0.5;
    let gr = z.transpose() * g;
    let eig = hr.symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let tol = 1e-10 * max_eig.max(1.0);
    let mut newton = Vector::zeros(z.ncols());
    let mut flat = Vector::zeros(z.ncols());
    for k in 0..eig.eigenvalues.len() {
        let v = eig.eigenvectors.column(k);
        let coef = v.dot(&gr);
        if eig.eigenvalues[k] > tol {
            newton -= v * (coef / eig.eigenvalues[k]);
        } else {
            flat -= v * coef;
        }
    }
    if flat.amax() > 1e-10 * (1.0 + g.amax()) {
        (z * flat, false)
    } else {
        (z * newton, true)
    }
}

fn finish(p: &QpProblem, x: Vector, w: &[usize], status: Status) -> Solution {
    let me = p.a.nrows();
    let mi = p.k.nrows();
    let g = &p.q_mat * &x + &p.q;
    let c = working_matrix(p, w);
    let mu = crate::linalg::lstsq(&c.transpose(), &(-&g));
    let eq_duals = Vector::from_fn(me, |i, _| mu[i]);
    let mut ineq_duals = Vector::zeros(mi);
    for (pos, &i) in w.iter().enumerate() {
        ineq_duals[i] = mu[me + pos].max(0.0);
    }
    let mut sol = Solution {
        status,
        objective: p.objective(&x),
        primal: x,
        eq_duals,
        ineq_duals,
        kkt_residual: f64::INFINITY,
        iterations: 0,
    };
    if status == Status::Optimal {
        sol.kkt_residual = kkt_residuals(p, &sol).max();
    }
    sol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optkit::RESIDUAL_TOL;
    use alloc::vec;

    fn scalar_box(target: f64) -> QpProblem {
        QpProblem {
            q_mat: Matrix::from_row_slice(1, 1, &[2.0]),
            q: Vector::from_vec(vec![-2.0 * target]),
            a: Matrix::zeros(0, 1),
            b: Vector::zeros(0),
            k: Matrix::from_row_slice(2, 1, &[1.0, -1.0]),
            h: Vector::from_vec(vec![1.0, 1.0]),
        }
    }

    #[test]
    fn clamps_to_bound() {
        let s = solve_qp(&scalar_box(2.0));
        assert_eq!(s.status, Status::Optimal);
        assert!((s.primal[0] - 1.0).abs() < 1e-12);
        assert!(s.ineq_duals[0] > 0.0);
        assert!(s.kkt_residual < RESIDUAL_TOL);
    }

    #[test]
    fn interior_minimum_has_zero_duals() {
        let s = solve_qp(&scalar_box(0.0));
        assert_eq!(s.status, Status::Optimal);
        assert!(s.primal[0].abs() < 1e-12);
        assert_eq!(s.ineq_duals.amax(), 0.0);
    }

    #[test]
    fn semidefinite_hessian_with_auxiliary_variables() {
        // Projection of 0.9 onto {x = 0.5 γ, |γ| ≤ 1}; γ carries no curvature.
        let p = QpProblem {
            q_mat: Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]),
            q: Vector::from_vec(vec![-1.8, 0.0]),
            a: Matrix::from_row_slice(1, 2, &[1.0, -0.5]),
            b: Vector::from_vec(vec![0.0]),
            k: Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]),
            h: Vector::from_vec(vec![1.0, 1.0]),
        };
        let s = solve_qp_from(&p, &Vector::zeros(2));
        assert_eq!(s.status, Status::Optimal);
        assert!((s.primal[0] - 0.5).abs() < 1e-12);
        assert!((s.primal[1] - 1.0).abs() < 1e-12);
        assert!(s.kkt_residual < RESIDUAL_TOL);
    }

    #[test]
    fn unbounded_linear_direction() {
        let p = QpProblem {
            q_mat: Matrix::zeros(1, 1),
            q: Vector::from_vec(vec![1.0]),
            a: Matrix::zeros(0, 1),
            b: Vector::zeros(0),
            k: Matrix::from_row_slice(1, 1, &[1.0]),
            h: Vector::from_vec(vec![0.0]),
        };
        assert_eq!(solve_qp(&p).status, Status::Unbounded);
    }
}
