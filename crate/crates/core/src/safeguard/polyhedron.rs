use alloc::vec::Vec;

use super::encode::{encode_containment, AffineZonotope, LinSys};
use super::{require_lin, SafeActionSpec, SafeSetMode, TransitionLinearization};
use crate::error::Result;
use crate::{Matrix, Vector};

/// The safe action set as the projection of a polyhedron,
/// `{a : ∃y, E[a; y] = e, K[a; y] ≤ k}`.
///
/// The first `dim` variables are the action; the remaining `aux` are auxiliary.
#[derive(Debug, Clone)]
pub struct ActionPolyhedron {
    pub dim: usize,
    pub aux: usize,
    pub eq_a: Matrix,
    pub eq_b: Vector,
    pub ineq_a: Matrix,
    pub ineq_b: Vector,
}

impl ActionPolyhedron {
    pub fn vars(&self) -> usize {
        self.dim + self.aux
    }

    pub(crate) fn from_sys(dim: usize, sys: &LinSys) -> Self {
        let (eq_a, eq_b, ineq_a, ineq_b) = sys.dense();
        ActionPolyhedron {
            dim,
            aux: sys.n - dim,
            eq_a,
            eq_b,
            ineq_a,
            ineq_b,
        }
    }
}

/// Builds the lifted polyhedron of safe actions.
///
/// Explicit sets use `a − Gγ = c`, `‖γ‖∞ ≤ 1`. Induced sets require the next-state set
/// `⟨f(s, a, c_W), ∂f/∂w G_W⟩` to pass the generator containment test against the safe
/// states, intersected with the feasible box.
pub fn action_polyhedron(spec: &SafeActionSpec, lin: Option<&TransitionLinearization>) -> Result<ActionPolyhedron> {
    let d = spec.action_dim();
    let lin = require_lin(spec, lin)?;
    match &spec.mode {
        SafeSetMode::Explicit(z) => {
            let n = z.num_generators();
            let mut sys = LinSys::new(d + n);
            for r in 0..d {
                let mut row = alloc::vec![(r, 1.0)];
                row.extend((0..n).map(|j| (d + j, -z.generators()[(r, j)])));
                sys.eq.push((row, z.center()[r]));
            }
            for j in 0..n {
                sys.ineq.push((alloc::vec![(d + j, 1.0)], 1.0));
                sys.ineq.push((alloc::vec![(d + j, -1.0)], 1.0));
            }
            Ok(ActionPolyhedron::from_sys(d, &sys))
        }
        SafeSetMode::Induced { safe_states, noise } => {
            let l = lin.expect("checked by require_lin");
            let mut sys = LinSys::new(d);
            let inner = AffineZonotope {
                centre: &l.value - &l.df_da * &l.action,
                centre_terms: (0..d).map(|k| (k, l.df_da.column(k).into_owned())).collect(),
                scaled: Vec::new(),
                fixed: noise_generators(l, noise.half_widths()),
            };
            encode_containment(&mut sys, &inner, safe_states)?;
            let vars: Vec<usize> = (0..d).collect();
            sys.add_box(&vars, &spec.feasible);
            Ok(ActionPolyhedron::from_sys(d, &sys))
        }
    }
}

/// `∂f/∂w · diag(h)` without identically zero columns.
pub(crate) fn noise_generators(l: &TransitionLinearization, half_widths: &Vector) -> Matrix {
    let g = &l.df_dw * Matrix::from_diagonal(half_widths);
    let keep: Vec<usize> = (0..g.ncols()).filter(|&j| g.column(j).amax() > 0.0).collect();
    Matrix::from_fn(g.nrows(), keep.len(), |i, k| g[(i, keep[k])])
}
