//! Checks that a safe state set is usable as a robust control invariant set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safeshield_core::envsim::{induced_spec, linearize, Environment};
use safeshield_core::optkit::{solve_lp, LpProblem, Status};
use safeshield_core::safeguard::{action_polyhedron, SafeguardKind};
use safeshield_core::shac::lane_step;
use safeshield_core::zonoset::CONTAINMENT_TOL;
use safeshield_core::{Vector, Zonotope};

use crate::error::Result;

/// Counterexamples kept in a report.
pub const MAX_COUNTEREXAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    /// No feasible action keeps the next-state set inside the safe set.
    EmptyActionSet,
    /// The safeguarded action and an extreme noise draw left the safe set.
    Escaped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub state: Vector,
    pub failure: Failure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafeSetReport {
    pub samples: usize,
    pub empty_action_sets: usize,
    pub escapes: usize,
    pub counterexamples: Vec<Counterexample>,
}

impl SafeSetReport {
    pub fn passed(&self) -> bool {
        self.empty_action_sets == 0 && self.escapes == 0
    }
}

/// Sample states: every vertex when there are at most `samples / 2` of them, the rest
/// uniform in generator space.
fn sample_states(safe: &Zonotope, samples: usize, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    let n = safe.num_generators();
    let mut out = Vec::with_capacity(samples);
    if n < 20 && (1usize << n) <= samples / 2 {
        for mask in 0..(1usize << n) {
            let beta = Vector::from_fn(n, |j, _| if mask >> j & 1 == 1 { 1.0 } else { -1.0 });
            out.push(safe.point_at(&beta));
        }
    }
    while out.len() < samples {
        let beta = Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        out.push(safe.point_at(&beta));
    }
    out
}

/// For `samples` states in `safe`, checks that the induced safe action set is non-empty
/// and that one boundary-projected random action followed by a random corner of the
/// noise box stays inside `safe`.
pub fn validate_safe_set(env: &dyn Environment, safe: &Zonotope, samples: usize, seed: u64) -> Result<SafeSetReport> {
    let spec = induced_spec(env, safe)?;
    let kind = SafeguardKind::BoundaryProjection { regularization: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = sample_states(safe, samples, &mut rng);
    let feasible = &env.params().feasible_actions;
    let noise = &env.params().noise;
    let mut report = SafeSetReport {
        samples: states.len(),
        empty_action_sets: 0,
        escapes: 0,
        counterexamples: Vec::new(),
    };
    let record = |report: &mut SafeSetReport, state: &Vector, failure| {
        if report.counterexamples.len() < MAX_COUNTEREXAMPLES {
            report.counterexamples.push(Counterexample {
                state: state.clone(),
                failure,
            });
        }
    };
    for s in &states {
        let lin = linearize(env, s, feasible.center());
        let poly = action_polyhedron(&spec, Some(&lin))?;
        let lp = LpProblem::new(
            Vector::zeros(poly.vars()),
            poly.eq_a.clone(),
            poly.eq_b.clone(),
            poly.ineq_a.clone(),
            poly.ineq_b.clone(),
        );
        if solve_lp(&lp).status != Status::Optimal {
            report.empty_action_sets += 1;
            record(&mut report, s, Failure::EmptyActionSet);
            continue;
        }
        let a = Vector::from_fn(feasible.dim(), |i, _| {
            feasible.center()[i] + feasible.half_widths()[i] * rng.random_range(-1.0..=1.0)
        });
        let w = Vector::from_fn(noise.dim(), |i, _| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            noise.center()[i] + sign * noise.half_widths()[i]
        });
        let step = lane_step(env, Some((&spec, &kind)), s, &a, &w, seed)?;
        let inside = safe.contains_point(&step.output.next_state, CONTAINMENT_TOL)?.contained;
        if step.violation || !inside {
            report.escapes += 1;
            record(&mut report, s, Failure::Escaped);
        }
    }
    Ok(report)
}
