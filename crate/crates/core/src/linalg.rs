//! Dense linear-algebra helpers shared by the solvers and safeguards.

use crate::{Matrix, Vector};

/// Relative singular-value cutoff used for ranks, null spaces and pseudoinverses.
pub const RANK_TOL: f64 = 1e-10;

const JACOBI_SWEEPS: usize = 80;

/// One-sided Jacobi SVD: returns `(σ, V, W)` with `m V = W`, `V` orthogonal `c × c`,
/// the columns of `W` mutually orthogonal with norms `σ`, sorted in decreasing order.
///
/// nalgebra 0.35 returns inaccurate factors for rank-deficient inputs, which the null
/// spaces and pseudoinverses here cannot tolerate.
pub fn jacobi_svd(m: &Matrix) -> (Vector, Matrix, Matrix) {
    let (r, c) = m.shape();
    let mut w = m.clone();
    let mut v = Matrix::identity(c, c);
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let cs = 1.0 / libm::sqrt(1.0 + t * t);
                let sn = cs * t;
                for i in 0..r {
                    let (a, b) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = cs * a - sn * b;
                    w[(i, q)] = sn * a + cs * b;
                }
                for i in 0..c {
                    let (a, b) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = cs * a - sn * b;
                    v[(i, q)] = sn * a + cs * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: alloc::vec::Vec<f64> = (0..c).map(|j| w.column(j).norm()).collect();
    let mut order: alloc::vec::Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let sv = Vector::from_fn(c, |k, _| norms[order[k]]);
    let v = Matrix::from_fn(c, c, |i, k| v[(i, order[k])]);
    let w = Matrix::from_fn(r, c, |i, k| w[(i, order[k])]);
    (sv, v, w)
}

fn cutoff(sv: &Vector) -> f64 {
    let max = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    RANK_TOL * max.max(1.0)
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn null_space(m: &Matrix) -> Matrix {
    let c = m.ncols();
    if m.nrows() == 0 {
        return Matrix::identity(c, c);
    }
    let (sv, v, _) = jacobi_svd(m);
    let tol = cutoff(&sv);
    let cols: alloc::vec::Vec<usize> = (0..c).filter(|&j| sv[j] <= tol).collect();
    Matrix::from_fn(c, cols.len(), |i, k| v[(i, cols[k])])
}

/// Numerical rank with an absolute singular-value threshold.
pub fn rank_with(m: &Matrix, abs_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    singular_values(m).iter().filter(|&&s| s > abs_tol).count()
}

/// The `min(rows, cols)` singular values of `m` in decreasing order.
pub fn singular_values(m: &Matrix) -> Vector {
    let k = m.nrows().min(m.ncols());
    let (sv, _, _) = if m.nrows() < m.ncols() {
        jacobi_svd(&m.transpose())
    } else {
        jacobi_svd(m)
    };
    sv.rows(0, k).into_owned()
}

/// Solves `m x = rhs` in the least-squares, minimum-norm sense.
pub fn lstsq(m: &Matrix, rhs: &Vector) -> Vector {
    crate::optkit::pseudoinverse(m) * rhs
}

/// Largest absolute entry.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

pub fn max_abs_vec(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

/// Stacks matrices with equal column counts on top of each other.
pub fn vstack(blocks: &[&Matrix]) -> Matrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.view_mut((r0, 0), (b.nrows(), cols)).copy_from(*b);
        r0 += b.nrows();
    }
    out
}

/// Orthogonal projector onto the column space of `m`.
pub fn column_projector(m: &Matrix) -> Matrix {
    if m.ncols() == 0 {
        return Matrix::zeros(m.nrows(), m.nrows());
    }
    m * crate::optkit::pseudoinverse(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_wide_matrix() {
        let m = Matrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let z = null_space(&m);
        assert_eq!(z.ncols(), 2);
        assert!(max_abs(&(&m * &z)) < 1e-12);
        assert!(max_abs(&(z.transpose() * &z - Matrix::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn null_space_of_full_rank_square_is_empty() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        assert_eq!(null_space(&m).ncols(), 0);
    }

    #[test]
    fn jacobi_svd_recomposes_rank_deficient_matrix() {
        let u = Matrix::from_row_slice(5, 2, &[0.3, -0.7, 0.9, 0.1, -0.4, 0.8, 0.5, 0.5, -0.2, 0.6]);
        let v = Matrix::from_row_slice(2, 4, &[0.7, -0.1, 0.4, 0.9, -0.6, 0.3, 0.8, -0.2]);
        let m = u * v;
        let (sv, v, w) = jacobi_svd(&m);
        assert!(max_abs(&(&m * &v - &w)) < 1e-14);
        assert!(max_abs(&(v.transpose() * &v - Matrix::identity(4, 4))) < 1e-14);
        assert!(sv[1] > 0.1 && sv[2] < 1e-14);
        assert!(sv.as_slice().windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn projector_is_idempotent() {
        let m = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 2.0]);
        let p = column_projector(&m);
        assert!(max_abs(&(&p * &p - &p)) < 1e-12);
        assert!(max_abs(&(&p * &m - &m)) < 1e-12);
    }
}
