use super::bp::face_dimension;
use super::{
    action_polyhedron, is_action_safe, require_lin, rm_center, ActionPolyhedron, CenterSource, JacobianKind, MapKind,
    RayMaskConfig, SafeActionSpec, SafeguardResult, SolverStats, TransitionLinearization,
};
use crate::error::{check_dim, Error, Result};
use crate::optkit::{solve_lp, LpProblem, Status};
use crate::zonoset::AxisBox;
use crate::{Matrix, Vector};

/// Rays shorter than this are treated as starting at their own end point.
pub const DEGENERATE_RAY: f64 = 1e-12;

/// Supporting half-space `hᵀb ≤ ρ` of the safe set at the boundary point, scaled so
/// that `hᵀ(a − c) = 1` along the ray that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub normal: Vector,
    pub offset: f64,
}

#[derive(Debug, Clone)]
pub struct SafeBoundary {
    pub point: Vector,
    /// Ray parameter of the boundary point; at least one exactly when the action is safe.
    pub alpha: f64,
    /// Distance from the ray origin to the boundary point.
    pub lambda: f64,
    pub facet: Facet,
    /// The boundary point lies on a face of dimension below `d − 1`.
    pub ambiguous: bool,
    pub stats: SolverStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleBoundary {
    pub point: Vector,
    pub lambda: f64,
    /// Ray parameter of the crossing.
    pub t: f64,
    /// Coordinate whose bound is crossed first (smallest index on ties).
    pub crossing: usize,
    /// The bound value crossed.
    pub bound: f64,
}

/// Safe boundary along the ray from `c` through `a`: `max α` subject to
/// `c + α(a − c)` being safe, solved as an LP over the safe-set polyhedron.
pub fn rm_boundary(
    spec: &SafeActionSpec,
    lin: Option<&TransitionLinearization>,
    c: &Vector,
    a: &Vector,
) -> Result<SafeBoundary> {
    check_dim("rm_boundary centre", spec.action_dim(), c.len())?;
    check_dim("rm_boundary action", spec.action_dim(), a.len())?;
    let u = a - c;
    if u.norm() <= DEGENERATE_RAY {
        return Err(Error::DegenerateRay);
    }
    let poly = action_polyhedron(spec, lin)?;
    ray_boundary(&poly, c, &u)
}

/// LP over `[α, y]` with the action eliminated as `origin + α·dir`.
pub(crate) fn ray_boundary(poly: &ActionPolyhedron, origin: &Vector, dir: &Vector) -> Result<SafeBoundary> {
    let d = poly.dim;
    let n = 1 + poly.aux;
    let split = |m: &Matrix, rhs: &Vector| {
        let ma = m.columns(0, d);
        let mut out = Matrix::zeros(m.nrows(), n);
        out.set_column(0, &(ma * dir));
        if poly.aux > 0 {
            out.view_mut((0, 1), (m.nrows(), poly.aux))
                .copy_from(&m.columns(d, poly.aux));
        }
        (out, rhs - ma * origin)
    };
    let (ea, eb) = split(&poly.eq_a, &poly.eq_b);
    let (ka, kb) = split(&poly.ineq_a, &poly.ineq_b);
    let mut cost = Vector::zeros(n);
    cost[0] = -1.0;
    let sol = solve_lp(&LpProblem::new(cost, ea, eb, ka, kb));
    let stats = SolverStats {
        lp_solves: 1,
        iterations: sol.iterations as u32,
        ..Default::default()
    };
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => {
            return Err(Error::SafetyFault(
                "ray origin does not reach the safe action set".into(),
            ));
        }
        s => return Err(Error::Solver(alloc::format!("safe boundary LP ended with {s:?}"))),
    }
    let alpha = sol.primal[0];
    let point = origin + dir * alpha;
    let normal =
        poly.eq_a.columns(0, d).transpose() * &sol.eq_duals + poly.ineq_a.columns(0, d).transpose() * &sol.ineq_duals;
    let offset = poly.eq_b.dot(&sol.eq_duals) + poly.ineq_b.dot(&sol.ineq_duals);
    let mut full = Vector::zeros(poly.vars());
    full.rows_mut(0, d).copy_from(&point);
    full.rows_mut(d, poly.aux).copy_from(&sol.primal.rows(1, poly.aux));
    let ambiguous = d > 1 && face_dimension(poly, &full) + 1 < d;
    Ok(SafeBoundary {
        lambda: alpha * dir.norm(),
        point,
        alpha,
        facet: Facet { normal, offset },
        ambiguous,
        stats: SolverStats {
            facet_ambiguous: ambiguous,
            ..stats
        },
    })
}

/// Closed-form intersection of the ray from `c` through `a` with the feasible box.
pub fn rm_feasible_boundary(feasible: &AxisBox, c: &Vector, a: &Vector) -> Result<FeasibleBoundary> {
    check_dim("rm_feasible_boundary centre", feasible.dim(), c.len())?;
    check_dim("rm_feasible_boundary action", feasible.dim(), a.len())?;
    let u = a - c;
    if u.norm() <= DEGENERATE_RAY {
        return Err(Error::DegenerateRay);
    }
    let (lo, hi) = (feasible.lower(), feasible.upper());
    let mut best: Option<(f64, usize, f64)> = None;
    for j in 0..u.len() {
        if u[j] == 0.0 {
            continue;
        }
        let bound = if u[j] > 0.0 { hi[j] } else { lo[j] };
        let t = (bound - c[j]) / u[j];
        if best.map_or(true, |(tb, _, _)| t < tb) {
            best = Some((t, j, bound));
        }
    }
    let (t, crossing, bound) = best.expect("nonzero ray has a nonzero coordinate");
    Ok(FeasibleBoundary {
        point: c + &u * t,
        lambda: t * u.norm(),
        t,
        crossing,
        bound,
    })
}

/// Radial map about `c`: linear `c + (λ_s/λ_f)(a − c)` or hyperbolic
/// `c + (a − c)(λ_s/λ_a)·tanh(λ_a/λ_s)/tanh(λ_f/λ_s)` with `λ_a = ‖a − c‖`.
pub fn rm_map(kind: MapKind, c: &Vector, lam_s: f64, lam_f: f64, a: &Vector) -> Result<Vector> {
    check_dim("rm_map", c.len(), a.len())?;
    if !(lam_s >= 0.0 && lam_s <= lam_f && lam_f > 0.0) {
        return Err(Error::Solver(alloc::format!(
            "ray mask needs 0 ≤ λ_s ≤ λ_f, got λ_s = {lam_s}, λ_f = {lam_f}"
        )));
    }
    let u = a - c;
    let r = u.norm();
    if r <= DEGENERATE_RAY || lam_s == 0.0 {
        return Ok(if r <= DEGENERATE_RAY { a.clone() } else { c.clone() });
    }
    let psi = match kind {
        MapKind::Linear => lam_s / lam_f,
        MapKind::Hyperbolic => hyperbolic_scale(r, lam_s, lam_f),
    };
    Ok(c + u * psi)
}

fn sech_sq(x: f64) -> f64 {
    let c = libm::cosh(x);
    1.0 / (c * c)
}

fn hyperbolic_scale(r: f64, s: f64, f: f64) -> f64 {
    (s / r) * libm::tanh(r / s) / libm::tanh(f / s)
}

/// Jacobian `ψI + u∇ψᵀ` of `a ↦ c + ψ(a)·u` with `u = a − c`, given the safe distance
/// `s`, the feasible distance `f` and their gradients with respect to `a`.
pub fn ray_map_jacobian(kind: MapKind, u: &Vector, s: f64, grad_s: &Vector, f: f64, grad_f: &Vector) -> Matrix {
    let d = u.len();
    let r = u.norm();
    let (psi, grad_psi) = match kind {
        MapKind::Linear => (s / f, grad_s / f - grad_f * (s / (f * f))),
        MapKind::Hyperbolic => {
            let t1 = libm::tanh(r / s);
            let t2 = libm::tanh(f / s);
            let sech1 = sech_sq(r / s);
            let sech2 = sech_sq(f / s);
            let psi = s * t1 / (r * t2);
            let d_r = sech1 / (r * t2) - psi / r;
            let d_f = -t1 * sech2 / (r * t2 * t2);
            let d_s = psi / s - sech1 / (s * t2) + t1 * f * sech2 / (r * s * t2 * t2);
            (psi, u * (d_r / r) + grad_s * d_s + grad_f * d_f)
        }
    };
    Matrix::identity(d, d) * psi + u * grad_psi.transpose()
}

/// Exact ray-mask Jacobian with the active safe facet and the crossed feasible bound
/// held fixed; the centre is treated as independent of `a`.
pub fn rm_jacobian(kind: MapKind, c: &Vector, a: &Vector, facet: &Facet, feasible: &FeasibleBoundary) -> Matrix {
    let u = a - c;
    let r2 = u.norm_squared();
    let r = libm::sqrt(r2);
    let hu = facet.normal.dot(&u);
    let s = r * (facet.offset - facet.normal.dot(c)) / hu;
    let grad_s = (&u / r2 - &facet.normal / hu) * s;
    let k = feasible.crossing;
    let f = r * (feasible.bound - c[k]) / u[k];
    let mut grad_f = &u / r2;
    grad_f[k] -= 1.0 / u[k];
    let grad_f = grad_f * f;
    ray_map_jacobian(kind, &u, s, &grad_s, f, &grad_f)
}

/// Expresses a Jacobian of a radial map in a local spherical frame: radial coordinate
/// first, followed by angular coordinates measured as arc length on the unit sphere.
///
/// For a map that moves `a` along its ray to `a_s` this is `T(a_s) J T(a)⁻¹` where
/// `T(x) = diag(1, 1/‖x − c‖, …) Qᵀ` and `Q` is an orthonormal frame whose first axis is
/// the ray direction. Concentric spheres give `diag(λ_s/λ_f, 1, …, 1)`.
pub fn spherical_frame_jacobian(c: &Vector, a: &Vector, a_s: &Vector, jacobian: &Matrix) -> Matrix {
    let d = c.len();
    let u = a - c;
    let r = u.norm();
    let r_s = (a_s - c).norm();
    let dir = &u / r;
    // Householder reflector with first column equal to the ray direction.
    let mut v = -dir.clone();
    v[0] += 1.0;
    let q = if v.norm() < 1e-14 {
        Matrix::identity(d, d)
    } else {
        Matrix::identity(d, d) - (&v * v.transpose()) * (2.0 / v.norm_squared())
    };
    let mut left = Matrix::identity(d, d);
    let mut right = Matrix::identity(d, d);
    for i in 1..d {
        left[(i, i)] = 1.0 / r_s;
        right[(i, i)] = r;
    }
    left * q.transpose() * jacobian * q * right
}

/// Full ray-mask pipeline: centre, safe and feasible boundaries, map and Jacobian.
pub(crate) fn ray_mask(
    spec: &SafeActionSpec,
    lin: Option<&TransitionLinearization>,
    cfg: &RayMaskConfig,
    a: &Vector,
    episode_seed: u64,
) -> Result<SafeguardResult> {
    let d = spec.action_dim();
    cfg.validate(d)?;
    let lin = require_lin(spec, lin)?;
    let mut stats = SolverStats::default();
    if cfg.center_source == CenterSource::Orthogonal && is_action_safe(spec, lin, a)?.0 {
        return Ok(SafeguardResult::unchanged(a, stats));
    }
    let (c, center_stats) = rm_center(spec, lin, cfg, a, episode_seed)?;
    stats.merge(&center_stats);
    let u = a - &c;
    if u.norm() <= DEGENERATE_RAY {
        return Ok(SafeguardResult::unchanged(a, stats));
    }
    let poly = action_polyhedron(spec, lin)?;
    let sb = ray_boundary(&poly, &c, &u)?;
    stats.merge(&sb.stats);
    let fb = rm_feasible_boundary(&spec.feasible, &c, a)?;
    let mut lam_s = sb.lambda;
    let lam_f = fb.lambda;
    if lam_s > lam_f {
        if lam_s <= lam_f * (1.0 + 1e-9) + 1e-12 {
            lam_s = lam_f;
        } else {
            return Err(Error::Solver(alloc::format!(
                "safe boundary beyond the feasible box: λ_s = {lam_s}, λ_f = {lam_f}"
            )));
        }
    }
    if lam_s <= DEGENERATE_RAY {
        // The centre sits on the boundary; every action collapses onto it.
        stats.facet_ambiguous = true;
        return Ok(SafeguardResult::new(a, c, Matrix::zeros(d, d), stats));
    }
    let a_s = rm_map(cfg.map_kind, &c, lam_s, lam_f, a)?;
    let jacobian = match cfg.jacobian_kind {
        JacobianKind::Passthrough => Matrix::identity(d, d),
        JacobianKind::Exact => rm_jacobian(cfg.map_kind, &c, a, &sb.facet, &fb),
    };
    Ok(SafeguardResult::new(a, a_s, jacobian, stats))
}
