#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safeshield_core::{Matrix, Vector, Zonotope};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Vector {
    Vector::from_fn(d, |_, _| rng.random_range(lo..hi))
}

/// Zonotope in `[-1, 1]^d` (scaled down until its interval hull fits) with random generators.
pub fn random_zonotope(rng: &mut ChaCha8Rng, d: usize, n: usize, margin: f64) -> Zonotope {
    let c = uniform_vec(rng, d, -0.2, 0.2);
    let mut g = Matrix::from_fn(d, n, |_, _| rng.random_range(-0.5..0.5));
    let reach = (0..d)
        .map(|i| c[i].abs() + g.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if reach > 1.0 - margin {
        g *= (1.0 - margin - c.amax()) / (reach - c.amax());
    }
    Zonotope::new(c, g).unwrap()
}

/// Central finite-difference Jacobian.
pub fn fd_jacobian(f: impl Fn(&Vector) -> Vector, x: &Vector, h: f64) -> Matrix {
    let m = f(x).len();
    let mut j = Matrix::zeros(m, x.len());
    for k in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        j.set_column(k, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    j
}

/// Counter-clockwise convex hull of planar points (monotone chain).
pub fn hull_2d(points: &[Vector]) -> Vec<Vector> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    if pts.len() < 3 {
        return pts.iter().map(|p| Vector::from_vec(vec![p.0, p.1])).collect();
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 1e-14 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 1e-14 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower.into_iter().map(|p| Vector::from_vec(vec![p.0, p.1])).collect()
}

/// Where the nearest polygon point sits: on the interior of edge `i`, or at vertex `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Edge(usize),
    Vertex(usize),
}

/// Nearest point of a convex polygon boundary to an outside point.
pub fn nearest_on_polygon(poly: &[Vector], p: &Vector) -> (Vector, Feature) {
    let n = poly.len();
    let mut best = (f64::INFINITY, poly[0].clone(), Feature::Vertex(0));
    for i in 0..n {
        let a = &poly[i];
        let b = &poly[(i + 1) % n];
        let e = b - a;
        let t = ((p - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
        let q = a + &e * t;
        let dist = (&q - p).norm();
        let feature = if t <= 0.0 {
            Feature::Vertex(i)
        } else if t >= 1.0 {
            Feature::Vertex((i + 1) % n)
        } else {
            Feature::Edge(i)
        };
        if dist < best.0 - 1e-15 {
            best = (dist, q, feature);
        }
    }
    (best.1, best.2)
}

/// H-representation `{x : h_iᵀx ≤ ρ_i}` of a planar convex polygon given counter-clockwise.
pub fn polygon_halfspaces(poly: &[Vector]) -> Vec<(Vector, f64)> {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let e = &poly[(i + 1) % n] - &poly[i];
            let h = Vector::from_vec(vec![e[1], -e[0]]).normalize();
            let rho = h.dot(&poly[i]);
            (h, rho)
        })
        .collect()
}

/// Robust control invariant set of the default pendulum.
pub fn pendulum_safe_set() -> Zonotope {
    Zonotope::new(
        Vector::zeros(2),
        Matrix::from_row_slice(2, 2, &[0.2514172, -0.09563374, -1.02990177, 1.02990177]),
    )
    .unwrap()
}

/// Robust control invariant set of the default quadrotor: a horizontal chain over
/// `(x, r, ẋ, ṙ)`, a vertical chain over `(y, ẏ)` and independent target intervals.
pub fn quadrotor_safe_set() -> Zonotope {
    let gx = [
        [
            0.00000220210906403,
            -0.00208520168695364,
            1.5191612082316757,
            2.9244926578361095,
        ],
        [
            0.00050507088624419,
            -0.01619495509502343,
            0.1580188071555131,
            0.07528116686321926,
        ],
        [
            -0.00016515817980185,
            0.01985906368527241,
            -1.5501644981955909,
            -1.4770164938565287,
        ],
        [
            -0.0378803164683142,
            0.15423766757165247,
            -0.16124368077093335,
            -0.03802079134506297,
        ],
    ];
    let gy = [
        [1.9799993492262575, -0.9800001610500648],
        [-0.9999996713263893, 1.000000164336806],
    ];
    let mut g = Matrix::zeros(8, 8);
    for (r, &i) in [0usize, 2, 3, 5].iter().enumerate() {
        for c in 0..4 {
            g[(i, c)] = gx[r][c];
        }
    }
    for (r, &i) in [1usize, 4].iter().enumerate() {
        for c in 0..2 {
            g[(i, 4 + c)] = gy[r][c];
        }
    }
    g[(6, 6)] = 4.4;
    g[(7, 7)] = 2.9;
    Zonotope::new(Vector::zeros(8), g).unwrap()
}
