//! Differentiable safeguards mapping policy actions into a safe action set.
//!
//! The safe action set is either given explicitly as a zonotope or induced by a safe
//! state set: an action is safe when the whole next-state set reachable under bounded
//! noise stays inside the safe states. For dynamics that are affine in the action and the
//! noise, a first-order expansion at the current state describes the next-state set
//! exactly, and the induced set is a convex polyhedron in action space.
//!
//! Two safeguards are provided, each returning the safe action together with its
//! Jacobian with respect to the input action:
//!
//! * boundary projection ([`bp_project`]): nearest safe action in the Euclidean norm;
//! * ray mask ([`rm_center`], [`rm_boundary`], [`rm_feasible_boundary`], [`rm_map`]):
//!   radial contraction of the feasible box onto the safe set about a safe centre.

mod bp;
mod center;
pub(crate) mod encode;
mod polyhedron;
mod raymask;

pub use bp::{bp_jacobian, bp_project};
pub use center::{rm_center, sample_directions};
pub use polyhedron::{action_polyhedron, ActionPolyhedron};
pub use raymask::{
    ray_map_jacobian, rm_boundary, rm_feasible_boundary, rm_jacobian, rm_map, spherical_frame_jacobian, Facet,
    FeasibleBoundary, SafeBoundary,
};

use crate::error::{check_dim, Error, Result};
use crate::zonoset::{AxisBox, ContainmentCertificate, Zonotope, CONTAINMENT_TOL};
use crate::{Matrix, Vector};

/// Mapping distance above which a safeguard application counts as an intervention.
pub const INTERVENTION_TOL: f64 = 1e-7;
/// Slack allowed when checking that an action lies in the feasible box.
pub const FEASIBLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum SafeSetMode {
    Explicit(Zonotope),
    Induced { safe_states: Zonotope, noise: AxisBox },
}

/// Safe action set description together with the feasible action box.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeActionSpec {
    pub mode: SafeSetMode,
    pub feasible: AxisBox,
}

impl SafeActionSpec {
    /// Explicit safe set; fails unless it is certified to lie inside the feasible box.
    pub fn explicit(safe_actions: Zonotope, feasible: AxisBox) -> Result<Self> {
        check_dim("explicit safe set", feasible.dim(), safe_actions.dim())?;
        let cert = feasible
            .to_full_zonotope()
            .contains_zonotope(&safe_actions, CONTAINMENT_TOL)?;
        if !cert.contained {
            return Err(Error::InvalidInput(alloc::format!(
                "safe action set is not contained in the feasible box (norm {})",
                cert.optimum
            )));
        }
        Ok(SafeActionSpec {
            mode: SafeSetMode::Explicit(safe_actions),
            feasible,
        })
    }

    /// Safe set induced by a safe state zonotope and a box of additive noise.
    pub fn induced(safe_states: Zonotope, noise: AxisBox, feasible: AxisBox) -> Result<Self> {
        check_dim("noise set", safe_states.dim(), noise.dim())?;
        Ok(SafeActionSpec {
            mode: SafeSetMode::Induced { safe_states, noise },
            feasible,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.feasible.dim()
    }
}

/// Transition value and partial derivatives at the current state, evaluated at the
/// action `action` and the noise centre.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionLinearization {
    pub action: Vector,
    pub value: Vector,
    pub df_da: Matrix,
    pub df_dw: Matrix,
}

impl TransitionLinearization {
    /// Next state predicted for action `a` at the noise centre.
    pub fn predict(&self, a: &Vector) -> Vector {
        &self.value + &self.df_da * (a - &self.action)
    }
}

/// Counters describing the work done by one safeguard application.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub qp_solves: u32,
    pub lp_solves: u32,
    pub conic_solves: u32,
    pub iterations: u32,
    /// The ray left the safe set through an edge or vertex rather than a facet; the
    /// returned Jacobian is one-sided.
    pub facet_ambiguous: bool,
}

impl SolverStats {
    pub fn merge(&mut self, other: &SolverStats) {
        self.qp_solves += other.qp_solves;
        self.lp_solves += other.lp_solves;
        self.conic_solves += other.conic_solves;
        self.iterations += other.iterations;
        self.facet_ambiguous |= other.facet_ambiguous;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafeguardResult {
    pub safe_action: Vector,
    /// `∂a_s/∂a`, or the substitute requested by the configuration.
    pub jacobian: Matrix,
    pub intervened: bool,
    pub mapping_distance: f64,
    pub stats: SolverStats,
}

impl SafeguardResult {
    pub(crate) fn new(a: &Vector, safe_action: Vector, jacobian: Matrix, stats: SolverStats) -> Self {
        let mapping_distance = (&safe_action - a).norm();
        SafeguardResult {
            safe_action,
            jacobian,
            intervened: mapping_distance > INTERVENTION_TOL,
            mapping_distance,
            stats,
        }
    }

    pub(crate) fn unchanged(a: &Vector, stats: SolverStats) -> Self {
        let d = a.len();
        SafeguardResult::new(a, a.clone(), Matrix::identity(d, d), stats)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CenterSource {
    /// Centre of an explicit safe zonotope.
    Explicit,
    /// Centre of the largest inscribed zonotope along `n_dirs` sampled directions.
    Zonotopic { n_dirs: usize },
    /// Midpoint of the chord through the projected boundary point along the projection
    /// direction. Defined for unsafe actions only; safe actions pass unchanged.
    Orthogonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Linear,
    Hyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianKind {
    Exact,
    /// Report the identity in place of the true Jacobian.
    Passthrough,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayMaskConfig {
    pub center_source: CenterSource,
    pub map_kind: MapKind,
    pub jacobian_kind: JacobianKind,
    pub regularization: f64,
}

impl RayMaskConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if let CenterSource::Zonotopic { n_dirs } = self.center_source {
            if n_dirs < d {
                return Err(Error::InvalidInput(alloc::format!(
                    "n_dirs = {n_dirs} must be at least d = {d}"
                )));
            }
        }
        if !(self.regularization >= 0.0) {
            return Err(Error::InvalidInput("regularisation must be nonnegative".into()));
        }
        Ok(())
    }
}

impl RayMaskConfig {
    /// Linear map, exact Jacobian, zonotopic centre with `2d` directions, no regularisation.
    pub fn for_dim(d: usize) -> Self {
        RayMaskConfig {
            center_source: CenterSource::Zonotopic { n_dirs: 2 * d },
            map_kind: MapKind::Linear,
            jacobian_kind: JacobianKind::Exact,
            regularization: 0.0,
        }
    }
}

/// Which safeguard to apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SafeguardKind {
    /// No safeguard: actions pass unchanged with an identity Jacobian.
    None,
    BoundaryProjection {
        regularization: f64,
    },
    RayMask(RayMaskConfig),
}

impl SafeguardKind {
    pub fn regularization(&self) -> f64 {
        match self {
            SafeguardKind::None => 0.0,
            SafeguardKind::BoundaryProjection { regularization } => *regularization,
            SafeguardKind::RayMask(cfg) => cfg.regularization,
        }
    }
}

/// Next-state set `⟨f(s, a, c_W), ∂f/∂w · diag(h_W)⟩` for the linearisation action.
pub fn next_state_set(lin: &TransitionLinearization, noise: &AxisBox) -> Result<Zonotope> {
    check_dim("next_state_set noise", lin.df_dw.ncols(), noise.dim())?;
    check_dim("next_state_set value", lin.df_dw.nrows(), lin.value.len())?;
    let g = &lin.df_dw * Matrix::from_diagonal(noise.half_widths());
    Zonotope::new(lin.value.clone(), g)
}

/// Next-state set for action `a`, with generators that vanish identically dropped.
pub(crate) fn next_state_set_at(lin: &TransitionLinearization, noise: &AxisBox, a: &Vector) -> Result<Zonotope> {
    check_dim("next_state_set action", lin.df_da.ncols(), a.len())?;
    let full = next_state_set(lin, noise)?;
    let keep: alloc::vec::Vec<usize> = (0..full.num_generators())
        .filter(|&j| full.generators().column(j).amax() > 0.0)
        .collect();
    let g = Matrix::from_fn(full.dim(), keep.len(), |i, k| full.generators()[(i, keep[k])]);
    Zonotope::new(lin.predict(a), g)
}

pub(crate) fn require_lin<'a>(
    spec: &SafeActionSpec,
    lin: Option<&'a TransitionLinearization>,
) -> Result<Option<&'a TransitionLinearization>> {
    match (&spec.mode, lin) {
        (SafeSetMode::Induced { .. }, None) => Err(Error::InvalidInput(
            "induced safe sets need a transition linearisation".into(),
        )),
        (SafeSetMode::Induced { safe_states, .. }, Some(l)) => {
            check_dim("linearisation state", safe_states.dim(), l.value.len())?;
            check_dim("linearisation action", spec.action_dim(), l.df_da.ncols())?;
            Ok(Some(l))
        }
        (SafeSetMode::Explicit(_), l) => Ok(l),
    }
}

/// Decides membership of `a` in the safe action set with the containment tests of
/// [`crate::zonoset`]; independent of the polyhedral encodings used by the safeguards.
pub fn is_action_safe(
    spec: &SafeActionSpec,
    lin: Option<&TransitionLinearization>,
    a: &Vector,
) -> Result<(bool, ContainmentCertificate)> {
    check_dim("is_action_safe", spec.action_dim(), a.len())?;
    if !spec.feasible.contains(a, FEASIBLE_TOL) {
        return Err(Error::InvalidInput("action outside the feasible box".into()));
    }
    let lin = require_lin(spec, lin)?;
    let cert = match (&spec.mode, lin) {
        (SafeSetMode::Explicit(z), _) => z.contains_point(a, CONTAINMENT_TOL)?,
        (SafeSetMode::Induced { safe_states, noise }, Some(l)) => {
            let next = next_state_set_at(l, noise, a)?;
            safe_states.contains_zonotope(&next, CONTAINMENT_TOL)?
        }
        (SafeSetMode::Induced { .. }, None) => unreachable!("checked by require_lin"),
    };
    Ok((cert.contained, cert))
}

/// Penalty `c_d‖a_s − a‖²` and its gradient `2c_d (∂a_s/∂a − I)ᵀ(a_s − a)` with respect to `a`.
pub fn regularized_loss_terms(a: &Vector, a_s: &Vector, jacobian: &Matrix, c_d: f64) -> (f64, Vector) {
    let diff = a_s - a;
    let penalty = c_d * diff.norm_squared();
    let d = a.len();
    let grad = (jacobian.transpose() - Matrix::identity(d, d)) * &diff * (2.0 * c_d);
    (penalty, grad)
}

/// Routes an action through the configured safeguard.
///
/// `episode_seed` fixes the sampled directions of the zonotopic safe centre.
pub fn apply_safeguard(
    kind: &SafeguardKind,
    spec: &SafeActionSpec,
    lin: Option<&TransitionLinearization>,
    a: &Vector,
    episode_seed: u64,
) -> Result<SafeguardResult> {
    check_dim("apply_safeguard", spec.action_dim(), a.len())?;
    match kind {
        SafeguardKind::None => Ok(SafeguardResult::unchanged(a, SolverStats::default())),
        SafeguardKind::BoundaryProjection { .. } => bp_project(spec, lin, a),
        SafeguardKind::RayMask(cfg) => raymask::ray_mask(spec, lin, cfg, a, episode_seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn interval(c: f64, r: f64) -> Zonotope {
        Zonotope::new(Vector::from_vec(vec![c]), Matrix::from_row_slice(1, 1, &[r])).unwrap()
    }

    #[test]
    fn explicit_membership() {
        let spec = SafeActionSpec::explicit(interval(0.0, 0.5), AxisBox::symmetric(1, 1.0).unwrap()).unwrap();
        let centre = Vector::from_vec(vec![0.0]);
        assert!(is_action_safe(&spec, None, &centre).unwrap().0);
        assert!(!is_action_safe(&spec, None, &Vector::from_vec(vec![0.9])).unwrap().0);
        assert!(is_action_safe(&spec, None, &Vector::from_vec(vec![1.5])).is_err());
    }

    #[test]
    fn explicit_set_must_fit_feasible_box() {
        assert!(SafeActionSpec::explicit(interval(0.8, 0.5), AxisBox::symmetric(1, 1.0).unwrap()).is_err());
    }

    #[test]
    fn next_state_set_shapes() {
        let lin = TransitionLinearization {
            action: Vector::zeros(1),
            value: Vector::from_vec(vec![1.0, 2.0]),
            df_da: Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
            df_dw: Matrix::identity(2, 2),
        };
        let z = next_state_set(&lin, &AxisBox::symmetric(2, 0.1).unwrap()).unwrap();
        assert_eq!(z.interval_hull().half_widths(), &Vector::from_vec(vec![0.1, 0.1]));
        let z = next_state_set(&lin, &AxisBox::symmetric(2, 0.0).unwrap()).unwrap();
        assert_eq!(z.interval_hull().half_widths().amax(), 0.0);
        assert_eq!(z.center(), &lin.value);
    }

    #[test]
    fn regularisation_example() {
        let a = Vector::from_vec(vec![0.9]);
        let a_s = Vector::from_vec(vec![0.5]);
        let (p, g) = regularized_loss_terms(&a, &a_s, &Matrix::zeros(1, 1), 1.0);
        assert!((p - 0.16).abs() < 1e-15);
        assert!((g[0] - 0.8).abs() < 1e-15);
        let (p, g) = regularized_loss_terms(&a, &a, &Matrix::identity(1, 1), 1.0);
        assert_eq!((p, g[0]), (0.0, 0.0));
    }
}
