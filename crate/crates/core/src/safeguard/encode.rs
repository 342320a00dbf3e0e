//! Linear encodings of zonotope containment over decision variables.

use alloc::vec::Vec;

use crate::error::Result;
use crate::zonoset::{direct_inverse, AxisBox, Zonotope};
use crate::{Matrix, Vector};

pub(crate) type SparseRow = Vec<(usize, f64)>;

/// A linear system `E x = e`, `K x ≤ k` assembled row by row.
#[derive(Debug, Clone, Default)]
pub(crate) struct LinSys {
    pub n: usize,
    pub eq: Vec<(SparseRow, f64)>,
    pub ineq: Vec<(SparseRow, f64)>,
}

impl LinSys {
    pub fn new(n: usize) -> Self {
        LinSys {
            n,
            ..Default::default()
        }
    }

    /// Appends `k` variables and returns the index of the first one.
    pub fn add_vars(&mut self, k: usize) -> usize {
        let start = self.n;
        self.n += k;
        start
    }

    pub fn dense(&self) -> (Matrix, Vector, Matrix, Vector) {
        let build = |rows: &[(SparseRow, f64)]| {
            let mut m = Matrix::zeros(rows.len(), self.n);
            let mut v = Vector::zeros(rows.len());
            for (r, (row, rhs)) in rows.iter().enumerate() {
                for &(j, x) in row {
                    m[(r, j)] += x;
                }
                v[r] = *rhs;
            }
            (m, v)
        };
        let (ea, eb) = build(&self.eq);
        let (ka, kb) = build(&self.ineq);
        (ea, eb, ka, kb)
    }

    /// `lower ≤ x_vars ≤ upper` coordinatewise.
    pub fn add_box(&mut self, vars: &[usize], b: &AxisBox) {
        let (lo, hi) = (b.lower(), b.upper());
        for (k, &j) in vars.iter().enumerate() {
            self.ineq.push((alloc::vec![(j, 1.0)], hi[k]));
            self.ineq.push((alloc::vec![(j, -1.0)], -lo[k]));
        }
    }
}

/// A zonotope whose centre and some generators depend affinely on decision variables:
/// centre `c₀ + Σ_k col_k x_k`, generators `[v_j x_{s_j} …, F]`.
///
/// Scaled generator columns assume their variable is nonnegative.
pub(crate) struct AffineZonotope {
    pub centre: Vector,
    pub centre_terms: Vec<(usize, Vector)>,
    pub scaled: Vec<(usize, Vector)>,
    pub fixed: Matrix,
}

/// Appends constraints certifying `inner ⊆ outer` by the sufficient generator test.
///
/// With a square, well-conditioned outer generator matrix the coefficients are unique
/// and the constraints are plain inequalities on the original variables. Otherwise the
/// coefficient matrix `[Γ γ]` and absolute-value bounds are added as auxiliary variables.
pub(crate) fn encode_containment(sys: &mut LinSys, inner: &AffineZonotope, outer: &Zonotope) -> Result<()> {
    let g = outer.generators();
    let n2 = outer.num_generators();
    let offset = outer.center() - &inner.centre;
    if let Some(inv) = direct_inverse(g) {
        let gamma0 = &inv * &offset;
        let fixed_coef = &inv * &inner.fixed;
        let scaled: Vec<(usize, Vector)> = inner.scaled.iter().map(|(j, v)| (*j, (&inv * v).abs())).collect();
        let centre: Vec<(usize, Vector)> = inner.centre_terms.iter().map(|(j, v)| (*j, &inv * v)).collect();
        for i in 0..n2 {
            let r: f64 = fixed_coef.row(i).iter().map(|x| x.abs()).sum();
            for s in [1.0, -1.0] {
                // Σ|P_ij| x_j + s·γ_i(x) ≤ 1 − r_i with γ(x) = γ₀ − Σ_k inv·col_k x_k.
                let mut row: SparseRow = scaled.iter().map(|(j, v)| (*j, v[i])).collect();
                row.extend(centre.iter().map(|(j, v)| (*j, -s * v[i])));
                sys.ineq.push((row, 1.0 - r - s * gamma0[i]));
            }
        }
        return Ok(());
    }
    let d = outer.dim();
    let cols = inner.scaled.len() + inner.fixed.ncols();
    // Γ (n2 × cols, column-major), γ (n2), u (n2 × (cols + 1)).
    let gam = sys.add_vars(n2 * cols);
    let gvec = sys.add_vars(n2);
    let u = sys.add_vars(n2 * (cols + 1));
    for (col, (var, v)) in inner.scaled.iter().enumerate() {
        for r in 0..d {
            let mut row: SparseRow = (0..n2).map(|i| (gam + col * n2 + i, g[(r, i)])).collect();
            row.push((*var, -v[r]));
            sys.eq.push((row, 0.0));
        }
    }
    for fc in 0..inner.fixed.ncols() {
        let col = inner.scaled.len() + fc;
        for r in 0..d {
            let row: SparseRow = (0..n2).map(|i| (gam + col * n2 + i, g[(r, i)])).collect();
            sys.eq.push((row, inner.fixed[(r, fc)]));
        }
    }
    for r in 0..d {
        let mut row: SparseRow = (0..n2).map(|i| (gvec + i, g[(r, i)])).collect();
        row.extend(inner.centre_terms.iter().map(|(j, v)| (*j, v[r])));
        sys.eq.push((row, offset[r]));
    }
    for i in 0..n2 {
        let mut sum: SparseRow = Vec::with_capacity(cols + 1);
        for col in 0..=cols {
            let x = if col < cols { gam + col * n2 + i } else { gvec + i };
            let ui = u + i * (cols + 1) + col;
            sys.ineq.push((alloc::vec![(x, 1.0), (ui, -1.0)], 0.0));
            sys.ineq.push((alloc::vec![(x, -1.0), (ui, -1.0)], 0.0));
            sum.push((ui, 1.0));
        }
        sys.ineq.push((sum, 1.0));
    }
    Ok(())
}
