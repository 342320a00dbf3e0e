//! Geometric-mean maximisation over a polyhedron with a log-barrier interior method.
//!
//! Maximising `Σ log x_i` and maximising `(Π x_i)^{1/n}` have the same maximiser, so the
//! logarithmic form is solved. A phase-one LP finds a point where every inequality and
//! every scale variable has positive slack; Newton's method then follows the central
//! path inside the affine hull of the equality constraints.

use alloc::vec::Vec;

use super::{solve_lp, LpProblem, Solution, Status};
use crate::linalg::null_space;
use crate::{Matrix, Vector};

const STRICT_TOL: f64 = 1e-9;
const GAP_TOL: f64 = 1e-8;
const GRAD_TOL: f64 = 1e-8;
const MU: f64 = 10.0;
const MAX_NEWTON: usize = 100;
const DIVERGED: f64 = 1e12;

/// `max Σ_{i∈log_vars} log x_i` subject to `A x = b`, `K x ≤ h`.
#[derive(Debug, Clone)]
pub struct LogSumProblem {
    pub a: Matrix,
    pub b: Vector,
    pub k: Matrix,
    pub h: Vector,
    pub log_vars: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LogSumSolution {
    /// Primal point and barrier-estimated multipliers of `K x ≤ h`.
    pub solution: Solution,
    /// `Σ log x_i` at the end of every centering step.
    pub history: Vec<f64>,
    /// Reduced barrier gradient norm divided by the barrier weight at return.
    pub gradient_norm: f64,
}

impl LogSumSolution {
    pub fn status(&self) -> Status {
        self.solution.status
    }

    pub fn x(&self) -> &Vector {
        &self.solution.primal
    }
}

/// Finds a point maximising the minimum slack, `None` if no strictly feasible point exists.
fn phase_one(p: &LogSumProblem) -> Option<Vector> {
    let n = p.a.ncols();
    let mi = p.k.nrows();
    let nl = p.log_vars.len();
    let total = n + 1;
    let s = n;
    let mut k = Matrix::zeros(mi + nl + 1, total);
    let mut h = Vector::zeros(mi + nl + 1);
    k.view_mut((0, 0), (mi, n)).copy_from(&p.k);
    for r in 0..mi {
        k[(r, s)] = 1.0;
        h[r] = p.h[r];
    }
    for (r, &i) in p.log_vars.iter().enumerate() {
        k[(mi + r, i)] = -1.0;
        k[(mi + r, s)] = 1.0;
    }
    k[(mi + nl, s)] = 1.0;
    h[mi + nl] = 1.0;
    let mut a = Matrix::zeros(p.a.nrows(), total);
    a.view_mut((0, 0), (p.a.nrows(), n)).copy_from(&p.a);
    let mut c = Vector::zeros(total);
    c[s] = -1.0;
    let sol = solve_lp(&LpProblem::new(c, a, p.b.clone(), k, h));
    if sol.status != Status::Optimal || sol.primal[s] <= STRICT_TOL {
        return None;
    }
    Some(sol.primal.rows(0, n).into_owned())
}

fn log_sum(p: &LogSumProblem, x: &Vector) -> f64 {
    p.log_vars.iter().map(|&i| libm::log(x[i])).sum()
}

/// Barrier value `−t Σ log x_i − Σ log(h − Kx)`, `None` outside the domain.
fn barrier(p: &LogSumProblem, t: f64, x: &Vector) -> Option<f64> {
    let slack = &p.h - &p.k * x;
    if slack.iter().any(|&s| s <= 0.0) || p.log_vars.iter().any(|&i| x[i] <= 0.0) {
        return None;
    }
    Some(-t * log_sum(p, x) - slack.iter().map(|&s| libm::log(s)).sum::<f64>())
}

fn derivatives(p: &LogSumProblem, t: f64, x: &Vector) -> (Vector, Matrix) {
    let n = x.len();
    let slack = &p.h - &p.k * x;
    let mut g = Vector::zeros(n);
    let mut hess = Matrix::zeros(n, n);
    for &i in &p.log_vars {
        g[i] -= t / x[i];
        hess[(i, i)] += t / (x[i] * x[i]);
    }
    for r in 0..p.k.nrows() {
        let row = p.k.row(r).transpose();
        g += &row / slack[r];
        hess += (&row * row.transpose()) / (slack[r] * slack[r]);
    }
    (g, hess)
}

pub fn maximize_log_sum(p: &LogSumProblem) -> LogSumSolution {
    let n = p.a.ncols();
    let mi = p.k.nrows();
    let me = p.a.nrows();
    let fail = |status| LogSumSolution {
        solution: Solution::failed(status, n, me, mi),
        history: Vec::new(),
        gradient_norm: f64::INFINITY,
    };
    let Some(mut x) = phase_one(p) else {
        return fail(Status::Infeasible);
    };
    let z = null_space(&p.a);
    let m_barrier = (mi + p.log_vars.len()).max(1) as f64;
    let mut t = 1.0;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut grad_norm;
    let mut centered;
    loop {
        grad_norm = f64::INFINITY;
        centered = false;
        for _ in 0..MAX_NEWTON {
            iterations += 1;
            let (g, hess) = derivatives(p, t, &x);
            let gr = z.transpose() * &g;
            grad_norm = gr.norm() / t;
            if grad_norm <= GRAD_TOL || z.ncols() == 0 {
                centered = true;
                break;
            }
            let hr = z.transpose() * hess * &z;
            let dy = match hr.clone().cholesky() {
                Some(ch) => ch.solve(&(-&gr)),
                None => -(super::pseudoinverse(&hr) * &gr),
            };
            let decrement = -gr.dot(&dy);
            let dx = &z * dy;
            // Steps below the resolution of x cannot shrink the gradient further.
            if dx.amax() <= 4.0 * f64::EPSILON * x.amax().max(1.0) {
                centered = true;
                break;
            }
            let f0 = barrier(p, t, &x).unwrap_or(f64::INFINITY);
            let mut step = 1.0;
            let mut moved = false;
            // The barrier is self-concordant: inside the quadratic region the full step
            // stays feasible and decreases it, even where the decrease is below the
            // resolution of `f0`.
            if decrement < 0.1 && barrier(p, t, &(&x + &dx)).is_some() {
                x += &dx;
                moved = true;
            }
            while !moved && step > 1e-16 {
                let cand = &x + &dx * step;
                if let Some(f) = barrier(p, t, &cand) {
                    if f <= f0 - 0.25 * step * decrement {
                        x = cand;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
            if x.amax() > DIVERGED {
                return fail(Status::Unbounded);
            }
        }
        history.push(log_sum(p, &x));
        if m_barrier / t <= GAP_TOL {
            break;
        }
        t *= MU;
    }

    let slack = &p.h - &p.k * &x;
    let mut ineq_duals = Vector::from_fn(mi, |r, _| 1.0 / (t * slack[r]));
    let mut eq_duals = Vector::zeros(me);
    if let Some(polished) = polish(p, &x, &slack, &ineq_duals) {
        x = polished.x;
        ineq_duals = polished.ineq_duals;
        eq_duals = polished.eq_duals;
        grad_norm = polished.gradient_norm;
        centered = true;
        history.push(log_sum(p, &x));
    }
    let objective = log_sum(p, &x);
    let status = if centered { Status::Optimal } else { Status::MaxIter };
    LogSumSolution {
        solution: Solution {
            status,
            primal: x,
            eq_duals,
            ineq_duals,
            objective,
            kkt_residual: grad_norm,
            iterations,
        },
        history,
        gradient_norm: grad_norm,
    }
}

struct Polished {
    x: Vector,
    eq_duals: Vector,
    ineq_duals: Vector,
    gradient_norm: f64,
}

/// Newton on the face picked out by the barrier, where constraints whose multiplier
/// estimate exceeds their slack are held as equalities.
///
/// Near active constraints the barrier Hessian is too stiff for the reduced gradient to
/// resolve below about `ε t λ²`; on the face there is no barrier term. The result is
/// kept only when it is feasible and its least-squares multipliers are nonnegative.
fn polish(p: &LogSumProblem, x0: &Vector, slack: &Vector, lam: &Vector) -> Option<Polished> {
    let n = x0.len();
    let me = p.a.nrows();
    let active: Vec<usize> = (0..slack.len()).filter(|&r| lam[r] > slack[r]).collect();
    let na = active.len();
    let mut m = Matrix::zeros(me + na, n);
    let mut rhs = Vector::zeros(me + na);
    m.rows_mut(0, me).copy_from(&p.a);
    rhs.rows_mut(0, me).copy_from(&p.b);
    for (i, &r) in active.iter().enumerate() {
        m.row_mut(me + i).copy_from(&p.k.row(r));
        rhs[me + i] = p.h[r];
    }
    let pinv = super::pseudoinverse(&m);
    let mut x = x0 - &pinv * (&m * x0 - &rhs);
    if p.log_vars.iter().any(|&i| x[i] <= 0.0) {
        return None;
    }
    let z = null_space(&m);
    let grad = |x: &Vector| {
        let mut g = Vector::zeros(n);
        for &i in &p.log_vars {
            g[i] = -1.0 / x[i];
        }
        g
    };
    let mut gnorm = (z.transpose() * grad(&x)).norm();
    for _ in 0..MAX_NEWTON {
        if gnorm <= 1e-13 || z.ncols() == 0 {
            break;
        }
        let g = grad(&x);
        let mut hess = Matrix::zeros(n, n);
        for &i in &p.log_vars {
            hess[(i, i)] = 1.0 / (x[i] * x[i]);
        }
        let gr = z.transpose() * &g;
        let dx = &z * -(super::pseudoinverse(&(z.transpose() * hess * &z)) * &gr);
        let mut step = 1.0;
        let f0 = -log_sum(p, &x);
        let mut moved = false;
        while step > 1e-16 {
            let cand = &x + &dx * step;
            if p.log_vars.iter().all(|&i| cand[i] > 0.0) && -log_sum(p, &cand) <= f0 + 1e-15 * f0.abs() {
                x = cand;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        let next = (z.transpose() * grad(&x)).norm();
        if !moved || next >= gnorm {
            gnorm = gnorm.min(next);
            break;
        }
        gnorm = next;
    }
    if gnorm > GRAD_TOL || (&p.k * &x - &p.h).iter().any(|&v| v > STRICT_TOL) {
        return None;
    }
    // ∇f + Mᵀ[ν; λ_active] = 0 in the least-squares sense.
    let duals = -(pinv.transpose() * grad(&x));
    if duals.rows(me, na).iter().any(|&l| l < -1e-9) {
        return None;
    }
    let mut ineq_duals = Vector::zeros(slack.len());
    for (i, &r) in active.iter().enumerate() {
        ineq_duals[r] = duals[me + i].max(0.0);
    }
    Some(Polished {
        x,
        eq_duals: duals.rows(0, me).into_owned(),
        ineq_duals,
        gradient_norm: gnorm,
    })
}
