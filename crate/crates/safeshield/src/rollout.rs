//! Recorded rollouts of a trained agent.

use rand_chacha::ChaCha8Rng;
use safeshield_core::envsim::{
    induced_spec, lane_rng, reset, rollout_vector, Environment, Policy, Shield, TrajectoryBuffer,
};
use safeshield_core::shac::{mix, Agent};
use safeshield_core::{Matrix, Vector};

use crate::config::Variant;
use crate::error::Result;
use crate::Experiment;

/// Deterministic mean-action policy of an agent.
pub struct MeanPolicy<'a>(pub &'a Agent);

impl Policy for MeanPolicy<'_> {
    fn act(&mut self, observations: &[Vector]) -> Vec<Vector> {
        let rows: Vec<_> = observations.iter().map(|o| o.transpose()).collect();
        let actions = self
            .0
            .policy
            .mean_action(&self.0.policy_params, &Matrix::from_rows(&rows));
        (0..actions.nrows()).map(|i| actions.row(i).transpose()).collect()
    }
}

/// Runs `lanes` episodes of `horizon` steps with the agent's mean action under the
/// variant's safeguard.
pub fn record_rollout(
    exp: &Experiment,
    variant: &Variant,
    agent: &Agent,
    lanes: usize,
    horizon: usize,
    seed: u64,
) -> Result<TrajectoryBuffer> {
    let env: Box<dyn Environment> = exp.build_env()?;
    let spec = induced_spec(env.as_ref(), &exp.safe_states)?;
    let shield = Shield {
        spec: &spec,
        kind: variant.kind,
    };
    let mut state = reset(&exp.safe_states, seed, lanes);
    let mut rngs: Vec<ChaCha8Rng> = (0..lanes).map(|l| lane_rng(mix(seed, 0x7247), l as u64)).collect();
    Ok(rollout_vector(
        env.as_ref(),
        &mut MeanPolicy(agent),
        Some(&shield),
        &mut state,
        &mut rngs,
        horizon,
        seed,
    )?)
}
