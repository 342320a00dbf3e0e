//! Zonotopes and axis-aligned boxes.
//!
//! A zonotope `⟨c, G⟩ = {c + Gβ : ‖β‖∞ ≤ 1}` is stored densely. Point and set containment
//! reduce to minimum ∞-norm problems; when the outer generator matrix is square and
//! well conditioned the minimiser is unique and obtained by a linear solve, otherwise the
//! epigraph LP of [`crate::optkit::solve_inf_norm`] is used.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::optkit::{solve_inf_norm, InfNormProblem, Status};
use crate::{Matrix, Vector};

/// Containment holds when the minimised norm is at most `1 + CONTAINMENT_TOL`.
pub const CONTAINMENT_TOL: f64 = 1e-7;
/// Coordinate tolerance for zonotopes without generators.
pub const SINGLETON_TOL: f64 = 1e-9;
/// Condition-number bound below which a square generator matrix is inverted directly.
const DIRECT_COND: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    center: Vector,
    generators: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    center: Vector,
    half_widths: Vector,
}

/// Outcome of a containment test.
#[derive(Debug, Clone)]
pub struct ContainmentCertificate {
    pub contained: bool,
    /// The minimised ∞-norm, `f64::INFINITY` if the equality system has no solution.
    pub optimum: f64,
    /// `γ` with `p = c + Gγ` (points) or `c₂ − c₁ = G₂γ` (sets).
    pub witness: Vector,
    /// `Γ` with `G₁ = G₂Γ` for set containment.
    pub witness_matrix: Option<Matrix>,
}

impl ContainmentCertificate {
    fn infeasible(n: usize) -> Self {
        ContainmentCertificate {
            contained: false,
            optimum: f64::INFINITY,
            witness: Vector::zeros(n),
            witness_matrix: None,
        }
    }
}

impl Zonotope {
    pub fn new(center: Vector, generators: Matrix) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidInput("zonotope dimension must be at least 1".into()));
        }
        check_dim("zonotope generator rows", center.len(), generators.nrows())?;
        if center.iter().chain(generators.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("zonotope entries must be finite".into()));
        }
        Ok(Zonotope { center, generators })
    }

    /// The singleton `{c}`.
    pub fn point(center: Vector) -> Result<Self> {
        let d = center.len();
        Zonotope::new(center, Matrix::zeros(d, 0))
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn generators(&self) -> &Matrix {
        &self.generators
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    /// `c + Gβ` for a coefficient vector `β`.
    pub fn point_at(&self, beta: &Vector) -> Vector {
        &self.center + &self.generators * beta
    }

    pub fn minkowski_sum(&self, other: &Zonotope) -> Result<Zonotope> {
        check_dim("minkowski_sum", self.dim(), other.dim())?;
        let d = self.dim();
        let (n1, n2) = (self.num_generators(), other.num_generators());
        let mut g = Matrix::zeros(d, n1 + n2);
        g.view_mut((0, 0), (d, n1)).copy_from(&self.generators);
        g.view_mut((0, n1), (d, n2)).copy_from(&other.generators);
        Ok(Zonotope {
            center: &self.center + &other.center,
            generators: g,
        })
    }

    /// Image `⟨Mc, MG⟩` under a linear map.
    pub fn linear_map(&self, m: &Matrix) -> Result<Zonotope> {
        check_dim("linear_map", self.dim(), m.ncols())?;
        Zonotope::new(m * &self.center, m * &self.generators)
    }

    pub fn translate(&self, t: &Vector) -> Result<Zonotope> {
        check_dim("translate", self.dim(), t.len())?;
        Ok(Zonotope {
            center: &self.center + t,
            generators: self.generators.clone(),
        })
    }

    /// Support function `vᵀc + ‖Gᵀv‖₁`.
    pub fn support(&self, v: &Vector) -> Result<f64> {
        check_dim("support", self.dim(), v.len())?;
        let spread: f64 = self.generators.tr_mul(v).iter().map(|x| x.abs()).sum();
        Ok(v.dot(&self.center) + spread)
    }

    /// Smallest box containing the zonotope.
    pub fn interval_hull(&self) -> AxisBox {
        let hw = Vector::from_fn(self.dim(), |i, _| self.generators.row(i).iter().map(|x| x.abs()).sum());
        AxisBox {
            center: self.center.clone(),
            half_widths: hw,
        }
    }

    /// Solves `min ‖γ‖∞` subject to `p = c + Gγ`.
    pub fn contains_point(&self, p: &Vector, tol: f64) -> Result<ContainmentCertificate> {
        check_dim("contains_point", self.dim(), p.len())?;
        let rhs = p - &self.center;
        let n = self.num_generators();
        if n == 0 {
            let contained = rhs.amax() <= SINGLETON_TOL;
            return Ok(ContainmentCertificate {
                contained,
                optimum: if contained { 0.0 } else { f64::INFINITY },
                witness: Vector::zeros(0),
                witness_matrix: None,
            });
        }
        if let Some(inv) = direct_inverse(&self.generators) {
            let gamma = inv * rhs;
            let optimum = gamma.amax();
            return Ok(ContainmentCertificate {
                contained: optimum <= 1.0 + tol,
                optimum,
                witness: gamma,
                witness_matrix: None,
            });
        }
        Ok(self.contains_point_lp(p, tol))
    }

    /// [`Zonotope::contains_point`] through the LP route regardless of the generator shape.
    pub fn contains_point_lp(&self, p: &Vector, tol: f64) -> ContainmentCertificate {
        let rhs = p - &self.center;
        let sol = solve_inf_norm(&InfNormProblem::vector(self.generators.clone(), rhs));
        if sol.status != Status::Optimal {
            return ContainmentCertificate::infeasible(self.num_generators());
        }
        ContainmentCertificate {
            contained: sol.norm <= 1.0 + tol,
            optimum: sol.norm,
            witness: sol.witness,
            witness_matrix: None,
        }
    }

    /// Sufficient test for `inner ⊆ self`: `min ‖[Γ γ]‖∞` subject to `G₁ = G₂Γ` and
    /// `c₂ − c₁ = G₂γ`, with the matrix ∞-norm (largest absolute row sum).
    ///
    /// A positive answer is a proof of containment; a negative one is inconclusive.
    pub fn contains_zonotope(&self, inner: &Zonotope, tol: f64) -> Result<ContainmentCertificate> {
        check_dim("contains_zonotope", self.dim(), inner.dim())?;
        let n1 = inner.num_generators();
        let rhs = stacked_rhs(inner, self);
        if self.num_generators() == 0 {
            let contained = rhs.amax() <= SINGLETON_TOL;
            return Ok(ContainmentCertificate {
                contained,
                optimum: if contained { 0.0 } else { f64::INFINITY },
                witness: Vector::zeros(0),
                witness_matrix: Some(Matrix::zeros(0, n1)),
            });
        }
        if let Some(inv) = direct_inverse(&self.generators) {
            let m = inv * rhs;
            let optimum = row_sum_norm(&m);
            return Ok(ContainmentCertificate {
                contained: optimum <= 1.0 + tol,
                optimum,
                witness: m.column(n1).into_owned(),
                witness_matrix: Some(m.columns(0, n1).into_owned()),
            });
        }
        Ok(self.contains_zonotope_lp(inner, tol))
    }

    /// [`Zonotope::contains_zonotope`] through the LP route.
    pub fn contains_zonotope_lp(&self, inner: &Zonotope, tol: f64) -> ContainmentCertificate {
        let d = self.dim();
        let n1 = inner.num_generators();
        let n2 = self.num_generators();
        let cols = n1 + 1;
        let rhs = stacked_rhs(inner, self);
        // Unknown M = [Γ γ] (n2 × cols), vectorised column-major.
        let mut a = Matrix::zeros(d * cols, n2 * cols);
        let mut b = Vector::zeros(d * cols);
        for j in 0..cols {
            a.view_mut((j * d, j * n2), (d, n2)).copy_from(&self.generators);
            b.rows_mut(j * d, d).copy_from(&rhs.column(j));
        }
        let groups: Vec<Vec<usize>> = (0..n2).map(|i| (0..cols).map(|j| j * n2 + i).collect()).collect();
        let sol = solve_inf_norm(&InfNormProblem { a, b, groups });
        if sol.status != Status::Optimal {
            return ContainmentCertificate::infeasible(n2);
        }
        let m = Matrix::from_fn(n2, cols, |i, j| sol.witness[j * n2 + i]);
        ContainmentCertificate {
            contained: sol.norm <= 1.0 + tol,
            optimum: sol.norm,
            witness: m.column(n1).into_owned(),
            witness_matrix: Some(m.columns(0, n1).into_owned()),
        }
    }

    /// All points `c + Gσ` with `σ ∈ {−1, 1}ⁿ`, deduplicated. Intended as a test oracle.
    pub fn enumerate_vertices(&self) -> Result<Vec<Vector>> {
        let (d, n) = (self.dim(), self.num_generators());
        if d > 3 || n > 8 {
            return Err(Error::TooLarge { dim: d, generators: n });
        }
        let mut out: Vec<Vector> = Vec::new();
        for mask in 0u32..(1u32 << n) {
            let sigma = Vector::from_fn(n, |i, _| if mask & (1 << i) != 0 { 1.0 } else { -1.0 });
            let p = self.point_at(&sigma);
            if !out.iter().any(|q| (q - &p).amax() <= 1e-9) {
                out.push(p);
            }
        }
        Ok(out)
    }
}

/// `[G₁, c₂ − c₁]`.
fn stacked_rhs(inner: &Zonotope, outer: &Zonotope) -> Matrix {
    let d = inner.dim();
    let n1 = inner.num_generators();
    let mut rhs = Matrix::zeros(d, n1 + 1);
    rhs.view_mut((0, 0), (d, n1)).copy_from(&inner.generators);
    rhs.set_column(n1, &(&outer.center - &inner.center));
    rhs
}

/// Largest absolute row sum.
pub fn row_sum_norm(m: &Matrix) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse of a square, well-conditioned generator matrix.
pub(crate) fn direct_inverse(g: &Matrix) -> Option<Matrix> {
    if !g.is_square() || g.nrows() == 0 {
        return None;
    }
    let sv = crate::linalg::singular_values(g);
    let max = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    let min = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min <= 0.0 || max / min > DIRECT_COND {
        return None;
    }
    g.clone().try_inverse()
}

impl AxisBox {
    pub fn new(center: Vector, half_widths: Vector) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidInput("box dimension must be at least 1".into()));
        }
        check_dim("box half-widths", center.len(), half_widths.len())?;
        if half_widths.iter().any(|&h| !(h >= 0.0) || !h.is_finite()) || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "box half-widths must be finite and nonnegative".into(),
            ));
        }
        Ok(AxisBox { center, half_widths })
    }

    /// `[−r, r]^d`.
    pub fn symmetric(d: usize, r: f64) -> Result<Self> {
        AxisBox::new(Vector::zeros(d), Vector::from_element(d, r))
    }

    pub fn from_bounds(lower: &Vector, upper: &Vector) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        AxisBox::new((lower + upper) * 0.5, (upper - lower) * 0.5)
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn half_widths(&self) -> &Vector {
        &self.half_widths
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn lower(&self) -> Vector {
        &self.center - &self.half_widths
    }

    pub fn upper(&self) -> Vector {
        &self.center + &self.half_widths
    }

    /// Per-coordinate interval test with an absolute tolerance.
    pub fn contains(&self, p: &Vector, tol: f64) -> bool {
        p.len() == self.dim() && (0..self.dim()).all(|i| (p[i] - self.center[i]).abs() <= self.half_widths[i] + tol)
    }

    /// The equivalent zonotope with diagonal generators; zero-width axes are dropped.
    pub fn to_zonotope(&self) -> Zonotope {
        let cols: Vec<usize> = (0..self.dim()).filter(|&i| self.half_widths[i] > 0.0).collect();
        let g = Matrix::from_fn(self.dim(), cols.len(), |i, k| {
            if i == cols[k] {
                self.half_widths[i]
            } else {
                0.0
            }
        });
        Zonotope {
            center: self.center.clone(),
            generators: g,
        }
    }

    /// The zonotope `diag(h)` with all `d` generators kept, including zero ones.
    pub fn to_full_zonotope(&self) -> Zonotope {
        Zonotope {
            center: self.center.clone(),
            generators: Matrix::from_diagonal(&self.half_widths),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn unit_square() -> Zonotope {
        Zonotope::new(v(&[0.0, 0.0]), Matrix::identity(2, 2)).unwrap()
    }

    #[test]
    fn minkowski_of_segments() {
        let a = Zonotope::new(v(&[0.0]), Matrix::from_row_slice(1, 1, &[1.0])).unwrap();
        let b = Zonotope::new(v(&[0.0]), Matrix::from_row_slice(1, 1, &[2.0])).unwrap();
        let s = a.minkowski_sum(&b).unwrap();
        assert_eq!(s.generators(), &Matrix::from_row_slice(1, 2, &[1.0, 2.0]));
        let e = Zonotope::point(v(&[0.0])).unwrap();
        assert_eq!(a.minkowski_sum(&e).unwrap(), a);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = unit_square();
        let b = Zonotope::point(v(&[0.0])).unwrap();
        assert!(matches!(a.minkowski_sum(&b), Err(Error::Dimension { .. })));
        assert!(a.support(&v(&[1.0])).is_err());
    }

    #[test]
    fn scaling_map_doubles_box() {
        let z = unit_square().linear_map(&(Matrix::identity(2, 2) * 2.0)).unwrap();
        assert_eq!(z.interval_hull().half_widths(), &v(&[2.0, 2.0]));
        assert_eq!(
            unit_square().linear_map(&Matrix::identity(2, 2)).unwrap(),
            unit_square()
        );
    }

    #[test]
    fn translation_round_trip_is_exact() {
        let z = Zonotope::new(v(&[0.3, -1.7]), Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 0.7])).unwrap();
        let t = v(&[0.1, 1e-3]);
        let back = z.translate(&t).unwrap().translate(&(-&t)).unwrap();
        let moved = unit_square().translate(&v(&[1.0, 0.0])).unwrap();
        assert!(
            moved
                .contains_point(&v(&[1.9, 0.0]), CONTAINMENT_TOL)
                .unwrap()
                .contained
        );
        assert!(
            !moved
                .contains_point(&v(&[-0.1, 0.0]), CONTAINMENT_TOL)
                .unwrap()
                .contained
        );
        assert_eq!(back.generators(), z.generators());
        assert!((back.center() - z.center()).amax() <= 1e-15);
    }

    #[test]
    fn support_examples() {
        assert_eq!(unit_square().support(&v(&[1.0, 0.0])).unwrap(), 1.0);
        let z = Zonotope::new(v(&[0.0, 0.0]), Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).unwrap();
        assert_eq!(z.support(&v(&[1.0, 0.0])).unwrap(), 2.0);
    }

    #[test]
    fn point_containment_examples() {
        let z = unit_square();
        let c = z.contains_point(&v(&[0.0, 0.0]), CONTAINMENT_TOL).unwrap();
        assert!(c.contained && c.optimum == 0.0 && c.witness.amax() == 0.0);
        let c = z.contains_point(&v(&[2.0, 0.0]), CONTAINMENT_TOL).unwrap();
        assert!(!c.contained && (c.optimum - 2.0).abs() < 1e-12);
        let c = z.contains_point_lp(&v(&[2.0, 0.0]), CONTAINMENT_TOL);
        assert!(!c.contained && (c.optimum - 2.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_zonotope_rejects_off_hull_points() {
        let seg = Zonotope::new(v(&[0.0, 0.0]), Matrix::from_row_slice(2, 1, &[1.0, 0.0])).unwrap();
        let c = seg.contains_point(&v(&[0.5, 0.1]), CONTAINMENT_TOL).unwrap();
        assert!(!c.contained && c.optimum.is_infinite());
        assert!(seg.contains_point(&v(&[0.5, 0.0]), CONTAINMENT_TOL).unwrap().contained);
    }

    #[test]
    fn singleton_compare() {
        let p = Zonotope::point(v(&[1.0, 2.0])).unwrap();
        assert!(
            p.contains_point(&v(&[1.0, 2.0 + 1e-10]), CONTAINMENT_TOL)
                .unwrap()
                .contained
        );
        assert!(
            !p.contains_point(&v(&[1.0, 2.0 + 1e-8]), CONTAINMENT_TOL)
                .unwrap()
                .contained
        );
    }

    #[test]
    fn self_and_scaled_containment() {
        let z = Zonotope::new(
            v(&[0.5, 0.0]),
            Matrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, 0.0, 1.0, 1.0]),
        )
        .unwrap();
        let c = z.contains_zonotope(&z, CONTAINMENT_TOL).unwrap();
        assert!(c.contained && (c.optimum - 1.0).abs() < 1e-9);
        let half = Zonotope::new(z.center().clone(), z.generators() * 0.5).unwrap();
        let c = z.contains_zonotope(&half, CONTAINMENT_TOL).unwrap();
        assert!(c.contained && (c.optimum - 0.5).abs() < 1e-9);
        let sq = unit_square();
        let c = sq.contains_zonotope(&sq, CONTAINMENT_TOL).unwrap();
        assert_eq!(c.witness_matrix.unwrap(), Matrix::identity(2, 2));
        assert_eq!(c.witness.amax(), 0.0);
    }

    #[test]
    fn direct_and_lp_routes_agree() {
        let outer = Zonotope::new(v(&[0.1, 0.2]), Matrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.8])).unwrap();
        let inner = Zonotope::new(
            v(&[0.0, 0.1]),
            Matrix::from_row_slice(2, 3, &[0.2, 0.1, 0.0, 0.0, 0.1, 0.3]),
        )
        .unwrap();
        let a = outer.contains_zonotope(&inner, CONTAINMENT_TOL).unwrap();
        let b = outer.contains_zonotope_lp(&inner, CONTAINMENT_TOL);
        assert!((a.optimum - b.optimum).abs() < 1e-9);
        let p = v(&[0.7, -0.4]);
        let a = outer.contains_point(&p, CONTAINMENT_TOL).unwrap();
        let b = outer.contains_point_lp(&p, CONTAINMENT_TOL);
        assert!((a.optimum - b.optimum).abs() < 1e-9);
    }

    #[test]
    fn vertex_enumeration() {
        assert_eq!(unit_square().enumerate_vertices().unwrap().len(), 4);
        let seg = Zonotope::new(v(&[0.0]), Matrix::from_row_slice(1, 1, &[1.0])).unwrap();
        let vs = seg.enumerate_vertices().unwrap();
        assert_eq!(vs, vec![v(&[-1.0]), v(&[1.0])]);
        let big = Zonotope::new(Vector::zeros(4), Matrix::identity(4, 4)).unwrap();
        assert!(matches!(big.enumerate_vertices(), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn box_round_trip() {
        let b = AxisBox::new(v(&[1.0, 0.0]), v(&[0.5, 0.0])).unwrap();
        let z = b.to_zonotope();
        assert_eq!(z.num_generators(), 1);
        assert!(z.contains_point(&v(&[1.4, 0.0]), CONTAINMENT_TOL).unwrap().contained);
        assert!(!z.contains_point(&v(&[1.4, 1e-3]), CONTAINMENT_TOL).unwrap().contained);
        assert!(AxisBox::new(v(&[0.0]), v(&[-1.0])).is_err());
    }
}
