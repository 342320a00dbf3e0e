//! Short-horizon actor-critic training through the differentiable environment and the
//! safeguard.
//!
//! Every iteration simulates a window of at most `horizon` steps on a fresh tape, so no
//! gradient crosses a window boundary. The actor minimises the negative discounted
//! window return bootstrapped with the critic value of the last state, plus the optional
//! mapping-distance penalty. The critic regresses td-λ targets computed from the same
//! window.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envsim::{lane_rng, linearize, reset, sample_box, step, EnvState, Environment, StepOutput};
use crate::error::{Error, Result};
use crate::gradnet::{Adam, GaussianPolicy, MlpArch, Tape, Var};
use crate::safeguard::{apply_safeguard, is_action_safe, SafeActionSpec, SafeguardKind};
use crate::stats::{bootstrap_ci, mean};
use crate::zonoset::Zonotope;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub horizon: usize,
    pub discount: f64,
    pub td_lambda: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Parallel environments.
    pub batch: usize,
    /// Budget in single-environment steps.
    pub total_steps: u64,
    pub critic_epochs: usize,
    pub critic_minibatches: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Actor gradients are rescaled to at most this Euclidean norm.
    pub max_grad_norm: f64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            horizon: 16,
            discount: 0.99,
            td_lambda: 0.95,
            actor_lr: 2e-3,
            critic_lr: 2e-3,
            batch: 32,
            total_steps: 100_000,
            critic_epochs: 16,
            critic_minibatches: 4,
            hidden: vec![64, 64],
            init_log_std: -1.0,
            max_grad_norm: 1.0,
            eval_every: 2048,
            eval_episodes: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad("discount must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.td_lambda) {
            return bad("td_lambda must lie in [0, 1]");
        }
        if self.horizon == 0 || self.batch == 0 || self.eval_episodes == 0 || self.eval_every == 0 {
            return bad("horizon, batch, eval_every and eval_episodes must be positive");
        }
        if self.critic_minibatches == 0 {
            return bad("critic_minibatches must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.max_grad_norm > 0.0) {
            return bad("learning rates and the gradient norm cap must be positive");
        }
        Ok(())
    }
}

/// Runs closures over environment lanes, possibly in parallel. Results are returned in
/// lane order, so training is deterministic regardless of scheduling.
pub trait LaneExecutor {
    fn map<T: Send, F: Fn(usize) -> T + Sync>(&self, n: usize, f: F) -> Vec<T>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl LaneExecutor for Sequential {
    fn map<T: Send, F: Fn(usize) -> T + Sync>(&self, n: usize, f: F) -> Vec<T> {
        (0..n).map(f).collect()
    }
}

/// Wall-clock source; the core crate has no clock of its own.
pub trait Clock {
    fn seconds(&self) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Safe state set and the safeguard applied to every executed action.
#[derive(Debug, Clone)]
pub struct SafetySetup {
    /// Initial states are drawn from this set; with a safeguard it also induces the safe
    /// action set.
    pub safe_states: Zonotope,
    pub kind: SafeguardKind,
}

/// Discounted td-λ targets for one lane.
///
/// `values[i]` is the critic value of the state reached after `rewards[i]`; the last
/// entry bootstraps the tail.
pub fn td_lambda_targets(rewards: &[f64], values: &[f64], discount: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len(), "one value per reward");
    let n = rewards.len();
    let mut out = vec![0.0; n];
    let mut next = 0.0;
    for i in (0..n).rev() {
        let tail = if i + 1 == n {
            values[i]
        } else {
            (1.0 - lambda) * values[i] + lambda * next
        };
        out[i] = rewards[i] + discount * tail;
        next = out[i];
    }
    out
}

/// What one lane did in one step.
#[derive(Debug, Clone)]
pub struct LaneStep {
    pub raw_action: Vector,
    pub safe_action: Vector,
    pub jacobian: Matrix,
    pub intervened: bool,
    pub violation: bool,
    pub ambiguous: bool,
    pub output: StepOutput,
}

/// Safeguards and executes one action on one lane.
pub fn lane_step(
    env: &dyn Environment,
    spec: Option<(&SafeActionSpec, &SafeguardKind)>,
    s: &Vector,
    a: &Vector,
    w: &Vector,
    episode_seed: u64,
) -> Result<LaneStep> {
    let d = a.len();
    let (safe_action, jacobian, intervened, violation, ambiguous) = match spec {
        Some((spec, kind)) => {
            let lin = linearize(env, s, a);
            let res = apply_safeguard(kind, spec, Some(&lin), a, episode_seed)?;
            let violation = match kind {
                SafeguardKind::None => false,
                _ => !is_action_safe(spec, Some(&lin), &res.safe_action)?.0,
            };
            (
                res.safe_action,
                res.jacobian,
                res.intervened,
                violation,
                res.stats.facet_ambiguous,
            )
        }
        None => (a.clone(), Matrix::identity(d, d), false, false, false),
    };
    let output = step(env, s, &safe_action, w)?;
    Ok(LaneStep {
        raw_action: a.clone(),
        safe_action,
        jacobian,
        intervened,
        violation,
        ambiguous,
        output,
    })
}

/// Actor and critic networks with their flat parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub policy_params: Vector,
    pub critic: MlpArch,
    pub critic_params: Vector,
}

impl Agent {
    pub fn new(env: &dyn Environment, cfg: &TrainConfig) -> Self {
        let policy = GaussianPolicy::new(env.obs_dim(), &cfg.hidden, env.params().feasible_actions.clone());
        let policy_params = policy.init(mix(cfg.seed, 1), cfg.init_log_std);
        let critic = MlpArch::new(env.obs_dim(), &cfg.hidden, 1);
        let critic_params = critic.init(mix(cfg.seed, 2), 1.0);
        Agent {
            policy,
            policy_params,
            critic,
            critic_params,
        }
    }

    /// Critic values of a batch of states.
    pub fn values(&self, env: &dyn Environment, states: &[Vector]) -> Vector {
        let obs = observations(env, states);
        self.critic.forward(&self.critic_params, &obs).column(0).into_owned()
    }
}

fn observations(env: &dyn Environment, states: &[Vector]) -> Matrix {
    let rows: Vec<_> = states.iter().map(|s| env.observe(s).0.transpose()).collect();
    Matrix::from_rows(&rows)
}

fn stack_rows(vs: &[Vector]) -> Matrix {
    let rows: Vec<_> = vs.iter().map(|v| v.transpose()).collect();
    Matrix::from_rows(&rows)
}

/// SplitMix64-style seed combination.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One simulated window recorded on a tape.
#[derive(Debug)]
pub struct RolloutBatch {
    pub tape: Tape,
    pub loss: Var,
    pub policy_leaves: crate::gradnet::TapedPolicy,
    /// States `s_0 … s_w` per step, one vector per lane.
    pub states: Vec<Vec<Vector>>,
    /// `rewards[i][lane]`.
    pub rewards: Vec<Vec<f64>>,
    pub raw_actions: Vec<Vec<Vector>>,
    pub safe_actions: Vec<Vec<Vector>>,
    pub interventions: u64,
    pub violations: u64,
    pub ambiguous: u64,
    pub clamped: u64,
    /// Critic values of the final states (constants in the loss).
    pub terminal_values: Vector,
}

impl RolloutBatch {
    pub fn window(&self) -> usize {
        self.rewards.len()
    }
}

/// Simulates `window` steps from `state`, recording everything the actor loss needs.
#[allow(clippy::too_many_arguments)]
pub fn rollout_window<X: LaneExecutor>(
    env: &dyn Environment,
    safety: Option<(&SafeActionSpec, &SafeguardKind)>,
    agent: &Agent,
    cfg: &TrainConfig,
    state: &mut EnvState,
    noise_rngs: &mut [ChaCha8Rng],
    window: usize,
    episode_seed: u64,
    action_seed: u64,
    exec: &X,
) -> Result<RolloutBatch> {
    let lanes = state.states.len();
    let bf = lanes as f64;
    let c_d = safety.map_or(0.0, |(_, k)| k.regularization());
    let mut tape = Tape::new();
    let policy_leaves = agent.policy.leaves(&mut tape, &agent.policy_params);
    let mut s_var = tape.leaf(stack_rows(&state.states));
    let mut loss = tape.scalar(0.0);
    let mut batch = RolloutBatch {
        tape: Tape::new(),
        loss,
        policy_leaves: policy_leaves.clone(),
        states: vec![state.states.clone()],
        rewards: Vec::new(),
        raw_actions: Vec::new(),
        safe_actions: Vec::new(),
        interventions: 0,
        violations: 0,
        ambiguous: 0,
        clamped: 0,
        terminal_values: Vector::zeros(lanes),
    };
    for i in 0..window {
        let obs_var = observe_node(&mut tape, env, &state.states, s_var)?;
        let eps = agent.policy.noise(lanes, mix(action_seed, i as u64));
        let a_var = agent.policy.sample_tape(&mut tape, &policy_leaves, obs_var, &eps)?;
        let raw = tape.value(a_var)?.clone();
        let noises: Vec<Vector> = noise_rngs
            .iter_mut()
            .map(|r| sample_box(r, &env.params().noise))
            .collect();
        let states = &state.states;
        let steps: Vec<Result<LaneStep>> = exec.map(lanes, |l| {
            let a = raw.row(l).transpose();
            lane_step(env, safety, &states[l], &a, &noises[l], episode_seed)
        });
        let steps: Vec<LaneStep> = steps.into_iter().collect::<Result<_>>()?;

        let safe = stack_rows(&steps.iter().map(|s| s.safe_action.clone()).collect::<Vec<_>>());
        let a_s_var = tape.custom(safe, &[(a_var, steps.iter().map(|s| s.jacobian.clone()).collect())])?;
        let next: Vec<Vector> = steps.iter().map(|s| s.output.next_state.clone()).collect();
        let s_next = tape.custom(
            stack_rows(&next),
            &[
                (s_var, steps.iter().map(|s| s.output.df_ds.clone()).collect()),
                (a_s_var, steps.iter().map(|s| s.output.df_da.clone()).collect()),
            ],
        )?;
        let rewards: Vec<f64> = steps.iter().map(|s| s.output.reward.value).collect();
        let r_var = tape.custom(
            Matrix::from_column_slice(lanes, 1, &rewards),
            &[
                (
                    s_next,
                    steps
                        .iter()
                        .map(|s| {
                            Matrix::from_row_slice(1, s.output.reward.dr_ds.len(), s.output.reward.dr_ds.as_slice())
                        })
                        .collect(),
                ),
                (
                    a_s_var,
                    steps
                        .iter()
                        .map(|s| {
                            Matrix::from_row_slice(1, s.output.reward.dr_da.len(), s.output.reward.dr_da.as_slice())
                        })
                        .collect(),
                ),
            ],
        )?;
        let total = tape.sum(r_var)?;
        let term = tape.scale(total, -libm::pow(cfg.discount, i as f64) / bf)?;
        loss = tape.add(loss, term)?;
        if c_d > 0.0 {
            let diff = tape.sub(a_s_var, a_var)?;
            let sq = tape.square(diff)?;
            let sum = tape.sum(sq)?;
            let penalty = tape.scale(sum, c_d / bf)?;
            loss = tape.add(loss, penalty)?;
        }

        for s in &steps {
            batch.interventions += s.intervened as u64;
            batch.violations += s.violation as u64;
            batch.ambiguous += s.ambiguous as u64;
            batch.clamped += s.output.clamped as u64;
        }
        batch
            .raw_actions
            .push(steps.iter().map(|s| s.raw_action.clone()).collect());
        batch
            .safe_actions
            .push(steps.iter().map(|s| s.safe_action.clone()).collect());
        batch.rewards.push(rewards);
        state.states = next;
        state.step += 1;
        batch.states.push(state.states.clone());
        s_var = s_next;
    }
    let obs_var = observe_node(&mut tape, env, &state.states, s_var)?;
    let critic_layers = agent.critic.leaves(&mut tape, &agent.critic_params);
    let v = agent.critic.forward_tape(&mut tape, &critic_layers, obs_var)?;
    batch.terminal_values = tape.value(v)?.column(0).into_owned();
    let total = tape.sum(v)?;
    let term = tape.scale(total, -libm::pow(cfg.discount, window as f64) / bf)?;
    loss = tape.add(loss, term)?;
    batch.tape = tape;
    batch.loss = loss;
    Ok(batch)
}

fn observe_node(tape: &mut Tape, env: &dyn Environment, states: &[Vector], s_var: Var) -> Result<Var> {
    let (obs, jac): (Vec<Vector>, Vec<Matrix>) = states.iter().map(|s| env.observe(s)).unzip();
    tape.custom(stack_rows(&obs), &[(s_var, jac)])
}

/// Actor loss value and its gradient with respect to the flat policy parameters.
pub fn policy_loss(batch: &RolloutBatch, agent: &Agent) -> Result<(f64, Vector)> {
    let loss = batch.tape.value(batch.loss)?[(0, 0)];
    let grads = batch.tape.backward(batch.loss)?;
    let g = agent
        .policy
        .gather(&agent.policy_params, &grads, &batch.policy_leaves)?;
    Ok((loss, g))
}

/// Mean-squared-error regression of the critic onto `targets` for `epochs` passes of
/// shuffled minibatches. Returns the loss over all samples after the last epoch, or an
/// error if the loss is not finite.
#[allow(clippy::too_many_arguments)]
pub fn critic_update(
    arch: &MlpArch,
    params: &mut Vector,
    opt: &mut Adam,
    obs: &Matrix,
    targets: &Vector,
    epochs: usize,
    minibatches: usize,
    seed: u64,
) -> Result<f64> {
    let n = obs.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let chunk = n.div_ceil(minibatches.max(1)).max(1);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(chunk) {
            let x = Matrix::from_fn(idx.len(), obs.ncols(), |r, c| obs[(idx[r], c)]);
            let y = Matrix::from_fn(idx.len(), 1, |r, _| targets[idx[r]]);
            let mut tape = Tape::new();
            let layers = arch.leaves(&mut tape, params);
            let xv = tape.leaf(x);
            let pred = arch.forward_tape(&mut tape, &layers, xv)?;
            let yv = tape.leaf(y);
            let diff = tape.sub(pred, yv)?;
            let sq = tape.square(diff)?;
            let sum = tape.sum(sq)?;
            let loss = tape.scale(sum, 1.0 / idx.len() as f64)?;
            let grads = tape.backward(loss)?;
            let g = arch.gather(&grads, &layers)?;
            opt.update(params, &g);
        }
    }
    let pred = arch.forward(params, obs);
    let loss = (0..n)
        .map(|i| {
            let e = pred[(i, 0)] - targets[i];
            e * e
        })
        .sum::<f64>()
        / n.max(1) as f64;
    if !loss.is_finite() {
        return Err(Error::Solver("critic loss is not finite".into()));
    }
    Ok(loss)
}

/// Evaluation of the deterministic (mean) policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub returns: Vec<f64>,
    pub interventions: u64,
    pub violations: u64,
    pub steps: u64,
}

/// Runs full episodes of the mean policy from `episodes` initial states drawn with
/// `seed`, safeguarded as configured.
pub fn evaluate<X: LaneExecutor>(
    env: &dyn Environment,
    safety: &SafetySetup,
    spec: Option<&SafeActionSpec>,
    agent: &Agent,
    episodes: usize,
    seed: u64,
    exec: &X,
) -> Result<EvalOutcome> {
    let mut state = reset(&safety.safe_states, seed, episodes);
    let mut rngs: Vec<ChaCha8Rng> = (0..episodes).map(|l| lane_rng(mix(seed, 0xE7A1), l as u64)).collect();
    let mut out = EvalOutcome {
        returns: vec![0.0; episodes],
        interventions: 0,
        violations: 0,
        steps: 0,
    };
    let guard = spec.map(|s| (s, &safety.kind));
    for _ in 0..env.params().episode_length {
        let obs = observations(env, &state.states);
        let actions = agent.policy.mean_action(&agent.policy_params, &obs);
        let noises: Vec<Vector> = rngs.iter_mut().map(|r| sample_box(r, &env.params().noise)).collect();
        let states = &state.states;
        let steps: Vec<Result<LaneStep>> = exec.map(episodes, |l| {
            let a = actions.row(l).transpose();
            lane_step(env, guard, &states[l], &a, &noises[l], mix(seed, l as u64))
        });
        for (l, s) in steps.into_iter().enumerate() {
            let s = s?;
            out.returns[l] += s.output.reward.value;
            out.interventions += s.intervened as u64;
            out.violations += s.violation as u64;
            state.states[l] = s.output.next_state;
        }
        out.steps += episodes as u64;
        state.step += 1;
    }
    Ok(out)
}

/// One evaluation point of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    /// Training environment steps taken so far.
    pub step: u64,
    pub eval_reward_mean: f64,
    pub eval_reward_ci: (f64, f64),
    /// Training interventions per environment step since the previous record.
    pub interventions_per_step: f64,
    /// Cumulative count of executed actions that failed the safety check.
    pub violations: u64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub evals: Vec<EvalRecord>,
    pub env_steps: u64,
    pub interventions: u64,
    pub violations: u64,
    pub clamped: u64,
    pub ambiguous_facets: u64,
    /// Actor or critic updates skipped for non-finite values.
    pub skipped_updates: u64,
    pub agent: Agent,
}

impl TrainLog {
    pub fn final_reward(&self) -> f64 {
        self.evals.last().map_or(f64::NAN, |e| e.eval_reward_mean)
    }
}

/// Bootstrap resamples used for evaluation confidence intervals.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Trains an agent and returns its evaluation log.
///
/// Safety faults (an empty safe action set) abort the run with an error.
pub fn train<X: LaneExecutor, C: Clock>(
    env: &dyn Environment,
    safety: &SafetySetup,
    cfg: &TrainConfig,
    exec: &X,
    clock: &C,
) -> Result<TrainLog> {
    cfg.validate()?;
    if let SafeguardKind::RayMask(rm) = &safety.kind {
        rm.validate(env.action_dim())?;
    }
    let spec = match safety.kind {
        SafeguardKind::None => None,
        _ => Some(crate::envsim::induced_spec(env, &safety.safe_states)?),
    };
    let guard = spec.as_ref().map(|s| (s, &safety.kind));
    let t0 = clock.seconds();
    let mut agent = Agent::new(env, cfg);
    let mut actor_opt = Adam::new(agent.policy.num_params(), cfg.actor_lr);
    let mut critic_opt = Adam::new(agent.critic.num_params(), cfg.critic_lr);
    let eval_seed = mix(cfg.seed, 0xE0A1);
    let mut log = TrainLog {
        evals: Vec::new(),
        env_steps: 0,
        interventions: 0,
        violations: 0,
        clamped: 0,
        ambiguous_facets: 0,
        skipped_updates: 0,
        agent: agent.clone(),
    };
    let mut since_eval = (0u64, 0u64);
    let (mut actor_loss, mut critic_loss) = (f64::NAN, f64::NAN);
    let record = |log: &mut TrainLog, agent: &Agent, since: &mut (u64, u64), al: f64, cl: f64| -> Result<()> {
        let ev = evaluate(env, safety, spec.as_ref(), agent, cfg.eval_episodes, eval_seed, exec)?;
        log.violations += ev.violations;
        let m = mean(&ev.returns);
        log.evals.push(EvalRecord {
            step: log.env_steps,
            eval_reward_mean: m,
            eval_reward_ci: bootstrap_ci(&ev.returns, BOOTSTRAP_RESAMPLES, 0.95, mix(eval_seed, log.env_steps)),
            interventions_per_step: if since.1 > 0 {
                since.0 as f64 / since.1 as f64
            } else {
                0.0
            },
            violations: log.violations,
            actor_loss: al,
            critic_loss: cl,
            wall_s: clock.seconds() - t0,
        });
        *since = (0, 0);
        Ok(())
    };
    record(&mut log, &agent, &mut since_eval, actor_loss, critic_loss)?;

    let lanes = cfg.batch;
    let mut episode = 0u64;
    let mut state = reset(&safety.safe_states, mix(cfg.seed, episode), lanes);
    let mut noise_rngs: Vec<ChaCha8Rng> = (0..lanes).map(|l| lane_rng(mix(cfg.seed, 0x5EED), l as u64)).collect();
    let mut iteration = 0u64;
    let mut next_eval = cfg.eval_every;
    while log.env_steps < cfg.total_steps {
        if state.step >= env.params().episode_length {
            episode += 1;
            state = reset(&safety.safe_states, mix(cfg.seed, episode), lanes);
        }
        let remaining_steps = (cfg.total_steps - log.env_steps).div_ceil(lanes as u64) as usize;
        let window = cfg
            .horizon
            .min(env.params().episode_length - state.step)
            .min(remaining_steps);
        let batch = rollout_window(
            env,
            guard,
            &agent,
            cfg,
            &mut state,
            &mut noise_rngs,
            window,
            mix(cfg.seed ^ 0xE915, episode),
            mix(cfg.seed ^ 0xAC7, iteration),
            exec,
        )?;
        let taken = (window * lanes) as u64;
        log.env_steps += taken;
        log.interventions += batch.interventions;
        log.violations += batch.violations;
        log.clamped += batch.clamped;
        log.ambiguous_facets += batch.ambiguous;
        since_eval.0 += batch.interventions;
        since_eval.1 += taken;

        let (loss, mut grad) = policy_loss(&batch, &agent)?;
        actor_loss = loss;
        let norm = grad.norm();
        if norm > cfg.max_grad_norm {
            grad *= cfg.max_grad_norm / norm;
        }
        if loss.is_finite() && actor_opt.update(&mut agent.policy_params, &grad) {
            agent.policy.clamp_log_std(&mut agent.policy_params);
        } else {
            log.skipped_updates += 1;
        }

        // Critic regression on td-λ targets of the window just simulated.
        let w = batch.window();
        let mut obs_rows = Vec::with_capacity(w * lanes);
        let mut targets = Vec::with_capacity(w * lanes);
        let values: Vec<Vector> = (1..=w).map(|i| agent.values(env, &batch.states[i])).collect();
        for l in 0..lanes {
            let rewards: Vec<f64> = (0..w).map(|i| batch.rewards[i][l]).collect();
            let vals: Vec<f64> = (0..w).map(|i| values[i][l]).collect();
            let t = td_lambda_targets(&rewards, &vals, cfg.discount, cfg.td_lambda);
            for i in 0..w {
                obs_rows.push(env.observe(&batch.states[i][l]).0.transpose());
                targets.push(t[i]);
            }
        }
        drop(batch);
        let obs = Matrix::from_rows(&obs_rows);
        let mut critic_params = agent.critic_params.clone();
        match critic_update(
            &agent.critic,
            &mut critic_params,
            &mut critic_opt,
            &obs,
            &Vector::from_vec(targets),
            cfg.critic_epochs,
            cfg.critic_minibatches,
            mix(cfg.seed ^ 0xC817, iteration),
        ) {
            Ok(l) => {
                critic_loss = l;
                agent.critic_params = critic_params;
            }
            Err(Error::Solver(_)) => log.skipped_updates += 1,
            Err(e) => return Err(e),
        }
        iteration += 1;
        if log.env_steps >= next_eval || log.env_steps >= cfg.total_steps {
            while next_eval <= log.env_steps {
                next_eval += cfg.eval_every;
            }
            record(&mut log, &agent, &mut since_eval, actor_loss, critic_loss)?;
        }
    }
    log.agent = agent;
    Ok(log)
}
