use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::bp::project;
use super::encode::{encode_containment, AffineZonotope, LinSys};
use super::polyhedron::noise_generators;
use super::raymask::ray_boundary;
use super::{
    action_polyhedron, is_action_safe, CenterSource, RayMaskConfig, SafeActionSpec, SafeSetMode, SolverStats,
    TransitionLinearization,
};
use crate::error::{Error, Result};
use crate::optkit::{maximize_log_sum, LogSumProblem, Status};
use crate::{Matrix, Vector};

/// `n` unit vectors in `R^d` drawn uniformly on the sphere, one per column.
pub fn sample_directions(d: usize, n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Matrix::zeros(d, n);
    for j in 0..n {
        loop {
            let v = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let norm = v.norm();
            if norm > 1e-6 {
                out.set_column(j, &(v / norm));
                break;
            }
        }
    }
    out
}

/// Safe centre used by the ray mask.
///
/// The centre depends on the state only (the orthogonal variant also on the action),
/// and is treated as a constant when differentiating the map.
pub fn rm_center(
    spec: &SafeActionSpec,
    lin: Option<&TransitionLinearization>,
    cfg: &RayMaskConfig,
    a: &Vector,
    episode_seed: u64,
) -> Result<(Vector, SolverStats)> {
    let lin = super::require_lin(spec, lin)?;
    match cfg.center_source {
        CenterSource::Explicit => match &spec.mode {
            SafeSetMode::Explicit(z) => Ok((z.center().clone(), SolverStats::default())),
            SafeSetMode::Induced { .. } => Err(Error::InvalidInput(
                "an explicit centre needs an explicit safe set".into(),
            )),
        },
        CenterSource::Zonotopic { n_dirs } => {
            let dirs = sample_directions(spec.action_dim(), n_dirs, episode_seed);
            zonotopic_center(spec, lin, &dirs)
        }
        CenterSource::Orthogonal => orthogonal_center(spec, lin, a),
    }
}

/// Centre of the zonotope `⟨c, D diag(l)⟩` maximising `Σ log l_i` subject to lying in the
/// feasible box and, for induced sets, keeping the next-state set inside the safe states.
pub(crate) fn zonotopic_center(
    spec: &SafeActionSpec,
    lin: Option<&TransitionLinearization>,
    dirs: &Matrix,
) -> Result<(Vector, SolverStats)> {
    let d = spec.action_dim();
    let m = dirs.ncols();
    let mut sys = LinSys::new(d + m);
    let identity_centre: Vec<(usize, Vector)> = (0..d)
        .map(|k| {
            let mut e = Vector::zeros(d);
            e[k] = 1.0;
            (k, e)
        })
        .collect();
    let dir_cols: Vec<(usize, Vector)> = (0..m).map(|j| (d + j, dirs.column(j).into_owned())).collect();
    let in_action_space = AffineZonotope {
        centre: Vector::zeros(d),
        centre_terms: identity_centre,
        scaled: dir_cols,
        fixed: Matrix::zeros(d, 0),
    };
    encode_containment(&mut sys, &in_action_space, &spec.feasible.to_full_zonotope())?;
    match &spec.mode {
        SafeSetMode::Explicit(z) => encode_containment(&mut sys, &in_action_space, z)?,
        SafeSetMode::Induced { safe_states, noise } => {
            let l = lin.expect("checked by require_lin");
            let next = AffineZonotope {
                centre: &l.value - &l.df_da * &l.action,
                centre_terms: (0..d).map(|k| (k, l.df_da.column(k).into_owned())).collect(),
                scaled: (0..m).map(|j| (d + j, &l.df_da * dirs.column(j))).collect(),
                fixed: noise_generators(l, noise.half_widths()),
            };
            encode_containment(&mut sys, &next, safe_states)?;
        }
    }
    let (a, b, k, h) = sys.dense();
    let sol = maximize_log_sum(&LogSumProblem {
        a,
        b,
        k,
        h,
        log_vars: (d..d + m).collect(),
    });
    let stats = SolverStats {
        conic_solves: 1,
        iterations: sol.solution.iterations as u32,
        ..Default::default()
    };
    match sol.status() {
        Status::Optimal | Status::MaxIter => Ok((sol.x().rows(0, d).into_owned(), stats)),
        Status::Infeasible => Err(Error::SafetyFault(
            "the safe action set has no interior; no safe centre exists".into(),
        )),
        Status::Unbounded => Err(Error::Solver("safe centre program is unbounded".into())),
    }
}

/// Midpoint of the chord through the boundary projection of `a`, along the projection
/// direction.
fn orthogonal_center(
    spec: &SafeActionSpec,
    lin: Option<&TransitionLinearization>,
    a: &Vector,
) -> Result<(Vector, SolverStats)> {
    if is_action_safe(spec, lin, a)?.0 {
        return Err(Error::InvalidInput(
            "the orthogonal centre is only defined for unsafe actions".into(),
        ));
    }
    let poly = action_polyhedron(spec, lin)?;
    let proj = project(&poly, a, spec)?;
    let mut stats = SolverStats {
        qp_solves: 1,
        iterations: proj.iterations as u32,
        ..Default::default()
    };
    let b1 = proj.primal.rows(0, poly.dim).into_owned();
    let dir = &b1 - a;
    let norm = dir.norm();
    if norm <= super::raymask::DEGENERATE_RAY {
        return Ok((b1, stats));
    }
    let far = ray_boundary(&poly, &b1, &(dir / norm))?;
    stats.merge(&far.stats);
    Ok(((&b1 + &far.point) * 0.5, stats))
}
