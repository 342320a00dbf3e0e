//! Two-phase dense tableau simplex.
//!
//! Free variables are split into positive and negative parts, inequalities receive a
//! slack column and every row receives an artificial column. Artificial columns stay in
//! the tableau after phase one so that rows proven redundant keep a basic artificial at
//! zero. Pricing is Dantzig's rule until a run of degenerate pivots is detected, then
//! Bland's rule takes over for the remainder of the phase. The final primal point and
//! the duals are recomputed from the optimal basis with an LU solve to remove
//! accumulated pivoting error.

use alloc::vec;
use alloc::vec::Vec;

use super::{kkt_residuals, QpProblem, Solution, Status};
use crate::{Matrix, Vector};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const PHASE1_TOL: f64 = 1e-8;
const DEGENERATE_RUN: usize = 50;

/// `min cᵀx` subject to `A x = b`, `K x ≤ h` with free `x`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub c: Vector,
    pub a: Matrix,
    pub b: Vector,
    pub k: Matrix,
    pub h: Vector,
}

impl LpProblem {
    pub fn new(c: Vector, a: Matrix, b: Vector, k: Matrix, h: Vector) -> Self {
        LpProblem { c, a, b, k, h }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    fn shapes_ok(&self) -> bool {
        let n = self.n();
        self.a.ncols() == n && self.k.ncols() == n && self.a.nrows() == self.b.len() && self.k.nrows() == self.h.len()
    }

    /// The same problem viewed as a QP with zero Hessian, for auditing.
    pub fn as_qp(&self) -> QpProblem {
        let n = self.n();
        QpProblem {
            q_mat: Matrix::zeros(n, n),
            q: self.c.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
            k: self.k.clone(),
            h: self.h.clone(),
        }
    }
}

struct Tableau {
    /// m × (cols + 1); the last column is the right-hand side.
    t: Matrix,
    basis: Vec<usize>,
    m: usize,
    cols: usize,
    /// First artificial column.
    art0: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
    MaxIter,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[(i, self.cols)]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.cols + 1;
        let p = self.t[(row, col)];
        for j in 0..w {
            self.t[(row, j)] /= p;
        }
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f != 0.0 {
                for j in 0..w {
                    let v = self.t[(row, j)];
                    if v != 0.0 {
                        self.t[(i, j)] -= f * v;
                    }
                }
                self.t[(i, col)] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Reduced costs `c_j − c_Bᵀ B⁻¹ A_j` for all columns.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj -= cb * self.t[(i, j)];
                }
            }
        }
        d
    }

    fn run_phase(&mut self, cost: &[f64], allowed: usize, max_iter: usize, iters: &mut usize) -> PhaseEnd {
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if *iters >= max_iter {
                return PhaseEnd::MaxIter;
            }
            let d = self.reduced_costs(cost);
            let mut enter = None;
            let mut best = -COST_TOL;
            for (j, &dj) in d.iter().enumerate().take(allowed) {
                if dj < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = dj;
                }
            }
            let Some(col) = enter else {
                return PhaseEnd::Optimal;
            };
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for i in 0..self.m {
                let a = self.t[(i, col)];
                if a > PIVOT_TOL {
                    let r = self.rhs(i).max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some(l) => r < ratio - 1e-12 || (r <= ratio + 1e-12 && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        leave = Some(i);
                        ratio = r;
                    }
                }
            }
            let Some(row) = leave else {
                return PhaseEnd::Unbounded;
            };
            if ratio <= 1e-12 {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(row, col);
            *iters += 1;
        }
    }
}

/// Solves a linear program with the two-phase simplex method.
pub fn solve_lp(p: &LpProblem) -> Solution {
    let n = p.n();
    let me = p.a.nrows();
    let mi = p.k.nrows();
    if !p.shapes_ok() {
        return Solution::failed(Status::Infeasible, n, me, mi);
    }
    let m = me + mi;
    // Columns: x⁺ (n), x⁻ (n), slacks (mi), artificials (m).
    let art0 = 2 * n + mi;
    let cols = art0 + m;
    let mut t = Matrix::zeros(m, cols + 1);
    let mut flipped = vec![false; m];
    for i in 0..m {
        let (row, rhs) = if i < me {
            (p.a.row(i), p.b[i])
        } else {
            (p.k.row(i - me), p.h[i - me])
        };
        let s = if rhs < 0.0 { -1.0 } else { 1.0 };
        flipped[i] = s < 0.0;
        for j in 0..n {
            t[(i, j)] = s * row[j];
            t[(i, n + j)] = -s * row[j];
        }
        if i >= me {
            t[(i, 2 * n + (i - me))] = s;
        }
        t[(i, art0 + i)] = 1.0;
        t[(i, cols)] = s * rhs;
    }
    let std_matrix = t.columns(0, cols).into_owned();
    let std_rhs = t.column(cols).into_owned();
    let mut tab = Tableau {
        t,
        basis: (art0..art0 + m).collect(),
        m,
        cols,
        art0,
    };
    let max_iter = 50 * (m + cols) + 1000;
    let mut iters = 0;

    let mut cost1 = vec![0.0; cols];
    for c in cost1.iter_mut().skip(art0) {
        *c = 1.0;
    }
    match tab.run_phase(&cost1, art0, max_iter, &mut iters) {
        PhaseEnd::Optimal => {}
        PhaseEnd::MaxIter => return Solution::failed(Status::MaxIter, n, me, mi),
        PhaseEnd::Unbounded => unreachable!("phase one objective is bounded below"),
    }
    let infeas: f64 = (0..m).filter(|&i| tab.basis[i] >= art0).map(|i| tab.rhs(i)).sum();
    if infeas > PHASE1_TOL * (1.0 + std_rhs.amax()) {
        let mut s = Solution::failed(Status::Infeasible, n, me, mi);
        s.iterations = iters;
        return s;
    }
    // Drive remaining artificials out of the basis where a structural pivot exists.
    for i in 0..m {
        if tab.basis[i] >= art0 {
            let mut best = None;
            let mut mag = PIVOT_TOL;
            for j in 0..art0 {
                let v = tab.t[(i, j)].abs();
                if v > mag {
                    mag = v;
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                tab.pivot(i, j);
            }
        }
    }

    let mut cost2 = vec![0.0; cols];
    for j in 0..n {
        cost2[j] = p.c[j];
        cost2[n + j] = -p.c[j];
    }
    let end = tab.run_phase(&cost2, tab.art0, max_iter, &mut iters);
    let status = match end {
        PhaseEnd::Optimal => Status::Optimal,
        PhaseEnd::Unbounded => Status::Unbounded,
        PhaseEnd::MaxIter => Status::MaxIter,
    };

    // Basic solution from the tableau, then polished through the basis matrix.
    let mut z = vec![0.0; cols];
    for i in 0..m {
        z[tab.basis[i]] = tab.rhs(i).max(0.0);
    }
    let mut y = Vector::zeros(m);
    let bmat = Matrix::from_fn(m, m, |i, k| std_matrix[(i, tab.basis[k])]);
    let cb = Vector::from_fn(m, |k, _| cost2[tab.basis[k]]);
    if m > 0 {
        let lu = bmat.clone().lu();
        if let Some(xb) = lu.solve(&std_rhs) {
            if xb.iter().all(|&v| v > -1e-9 && v.is_finite()) {
                for k in 0..m {
                    z[tab.basis[k]] = xb[k].max(0.0);
                }
            }
        }
        match bmat.transpose().lu().solve(&cb) {
            Some(v) if v.iter().all(|x| x.is_finite()) => y = v,
            _ => {
                // Fall back to reading duals off the artificial reduced costs.
                let d = tab.reduced_costs(&cost2);
                for i in 0..m {
                    y[i] = -d[art0 + i];
                }
            }
        }
    }

    let x = Vector::from_fn(n, |j, _| z[j] - z[n + j]);
    let mut eq_duals = Vector::zeros(me);
    let mut ineq_duals = Vector::zeros(mi);
    for i in 0..m {
        let yi = if flipped[i] { -y[i] } else { y[i] };
        if i < me {
            eq_duals[i] = -yi;
        } else {
            ineq_duals[i - me] = (-yi).max(0.0);
        }
    }
    let mut sol = Solution {
        status,
        objective: p.c.dot(&x),
        primal: x,
        eq_duals,
        ineq_duals,
        kkt_residual: f64::INFINITY,
        iterations: iters,
    };
    if status == Status::Optimal {
        sol.kkt_residual = kkt_residuals(&p.as_qp(), &sol).max();
    }
    sol
}
