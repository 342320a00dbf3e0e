use super::{QpProblem, Solution};

/// Componentwise KKT residuals of a candidate solution.
///
/// Computed directly from the problem data; shares no code with the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖Qx + q + Aᵀν + Kᵀλ‖∞`
    pub stationarity: f64,
    /// `‖Ax − b‖∞`
    pub primal_eq: f64,
    /// `max(0, max_i (K_i x − h_i))`
    pub primal_ineq: f64,
    /// `max(0, −min λ)`
    pub dual: f64,
    /// `max_i |λ_i (h_i − K_i x)|`
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_eq)
            .max(self.primal_ineq)
            .max(self.dual)
            .max(self.complementarity)
    }
}

pub fn kkt_residuals(p: &QpProblem, s: &Solution) -> KktResiduals {
    let x = &s.primal;
    let n = x.len();
    let mut stationarity = 0.0_f64;
    for j in 0..n {
        let mut g = p.q[j];
        for i in 0..n {
            g += p.q_mat[(j, i)] * x[i];
        }
        for (r, nu) in s.eq_duals.iter().enumerate() {
            g += p.a[(r, j)] * nu;
        }
        for (r, lam) in s.ineq_duals.iter().enumerate() {
            g += p.k[(r, j)] * lam;
        }
        stationarity = stationarity.max(g.abs());
    }
    let mut primal_eq = 0.0_f64;
    for r in 0..p.a.nrows() {
        let v: f64 = (0..n).map(|j| p.a[(r, j)] * x[j]).sum::<f64>() - p.b[r];
        primal_eq = primal_eq.max(v.abs());
    }
    let mut primal_ineq = 0.0_f64;
    let mut complementarity = 0.0_f64;
    for r in 0..p.k.nrows() {
        let slack = p.h[r] - (0..n).map(|j| p.k[(r, j)] * x[j]).sum::<f64>();
        primal_ineq = primal_ineq.max(-slack);
        complementarity = complementarity.max((s.ineq_duals[r] * slack).abs());
    }
    let dual = s.ineq_duals.iter().fold(0.0_f64, |a, &l| a.max(-l));
    KktResiduals {
        stationarity,
        primal_eq,
        primal_ineq,
        dual,
        complementarity,
    }
}
