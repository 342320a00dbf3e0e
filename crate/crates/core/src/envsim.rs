//! Differentiable control environments integrated with a semi-implicit Euler scheme.
//!
//! Both systems are second order: the velocities are advanced first and the positions
//! are advanced with the updated velocities. Bounded additive noise enters the state
//! derivative, so every transition is affine in the action and in the noise, and the
//! partial derivatives returned with each step describe the next-state set exactly.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::safeguard::{apply_safeguard, is_action_safe, SafeActionSpec, SafeguardKind, TransitionLinearization};
use crate::zonoset::{AxisBox, Zonotope};
use crate::{Matrix, Vector};

/// Settings shared by all environments.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvParams {
    pub dt: f64,
    pub episode_length: usize,
    pub feasible_states: AxisBox,
    pub feasible_actions: AxisBox,
    pub noise: AxisBox,
}

/// Value and partial derivatives of one transition before wrapping and clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next: Vector,
    pub df_ds: Matrix,
    pub df_da: Matrix,
    pub df_dw: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardEval {
    pub value: f64,
    pub dr_ds: Vector,
    pub dr_da: Vector,
}

pub trait Environment: Send + Sync {
    fn name(&self) -> &'static str;
    fn params(&self) -> &EnvParams;
    fn obs_dim(&self) -> usize;

    /// `f(s, a, w)` with its partials; affine in `a` and `w`.
    fn transition(&self, s: &Vector, a: &Vector, w: &Vector) -> Transition;

    /// Reward for arriving in `s_next` after executing `a`.
    fn reward(&self, s_next: &Vector, a: &Vector) -> RewardEval;

    /// Policy input and its Jacobian with respect to the state.
    fn observe(&self, s: &Vector) -> (Vector, Matrix);

    /// Coordinates that live on a circle and wrap to `[−π, π)` instead of clamping.
    fn wrapped(&self) -> &[usize] {
        &[]
    }

    fn state_dim(&self) -> usize {
        self.params().feasible_states.dim()
    }

    fn action_dim(&self) -> usize {
        self.params().feasible_actions.dim()
    }
}

/// Result of mapping an integrated state back into the feasible state box.
#[derive(Debug, Clone, PartialEq)]
pub struct Confined {
    pub state: Vector,
    /// Diagonal of the Jacobian of the confinement (zero for clamped coordinates).
    pub pass: Vector,
    pub clamped: usize,
}

/// Wraps angular coordinates and clamps the rest to the feasible state box.
pub fn confine<E: Environment + ?Sized>(env: &E, s: &Vector) -> Confined {
    let bx = &env.params().feasible_states;
    let (lo, hi) = (bx.lower(), bx.upper());
    let mut state = s.clone();
    let mut pass = Vector::from_element(s.len(), 1.0);
    let mut clamped = 0;
    for i in 0..s.len() {
        if env.wrapped().contains(&i) {
            state[i] = wrap_angle(s[i]);
        } else if s[i] < lo[i] || s[i] > hi[i] {
            state[i] = s[i].clamp(lo[i], hi[i]);
            pass[i] = 0.0;
            clamped += 1;
        }
    }
    Confined { state, pass, clamped }
}

/// Maps an angle to `[−π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = libm::fmod(x + PI, 2.0 * PI);
    if y < 0.0 {
        y + PI
    } else {
        y - PI
    }
}

/// Linearisation at the noise centre, as consumed by the safeguards.
pub fn linearize<E: Environment + ?Sized>(env: &E, s: &Vector, a: &Vector) -> TransitionLinearization {
    let t = env.transition(s, a, env.params().noise.center());
    TransitionLinearization {
        action: a.clone(),
        value: t.next,
        df_da: t.df_da,
        df_dw: t.df_dw,
    }
}

/// The safe action set a state-space safe set induces for this environment.
pub fn induced_spec<E: Environment + ?Sized>(env: &E, safe_states: &Zonotope) -> Result<SafeActionSpec> {
    check_dim("safe state set", env.state_dim(), safe_states.dim())?;
    SafeActionSpec::induced(
        safe_states.clone(),
        env.params().noise.clone(),
        env.params().feasible_actions.clone(),
    )
}

/// Physical constants of the inverted pendulum.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumConfig {
    pub gravity: f64,
    pub length: f64,
    pub mass: f64,
    pub torque: f64,
    pub dt: f64,
    pub episode_length: usize,
    pub noise: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        PendulumConfig {
            gravity: 9.81,
            length: 1.0,
            mass: 1.0,
            torque: 2.0,
            dt: 0.05,
            episode_length: 200,
            noise: 0.1,
        }
    }
}

/// Inverted pendulum with state `(θ, θ̇)`, upright at `θ = 0`, and a torque action.
///
/// `θ̈ = 1.5 g sin θ / l + 3 c a / (m l²) + w`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    pub config: PendulumConfig,
    params: EnvParams,
}

impl Pendulum {
    pub fn new(config: PendulumConfig) -> Result<Self> {
        if !(config.dt > 0.0) || config.episode_length == 0 {
            return Err(Error::InvalidInput("dt and episode length must be positive".into()));
        }
        let params = EnvParams {
            dt: config.dt,
            episode_length: config.episode_length,
            feasible_states: AxisBox::new(Vector::zeros(2), Vector::from_vec(alloc::vec![PI, 1000.0]))?,
            feasible_actions: AxisBox::symmetric(1, 1.0)?,
            noise: AxisBox::new(Vector::zeros(2), Vector::from_vec(alloc::vec![0.0, config.noise]))?,
        };
        Ok(Pendulum { config, params })
    }

    fn gains(&self) -> (f64, f64) {
        let c = &self.config;
        (
            1.5 * c.gravity / c.length,
            3.0 * c.torque / (c.mass * c.length * c.length),
        )
    }
}

impl Environment for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn params(&self) -> &EnvParams {
        &self.params
    }

    fn obs_dim(&self) -> usize {
        3
    }

    fn transition(&self, s: &Vector, a: &Vector, w: &Vector) -> Transition {
        let dt = self.params.dt;
        let (kg, ka) = self.gains();
        let (theta, omega) = (s[0], s[1]);
        let acc = kg * libm::sin(theta) + ka * a[0] + w[1];
        let omega_next = omega + dt * acc;
        let theta_next = theta + dt * (omega_next + w[0]);
        let dacc = kg * libm::cos(theta);
        Transition {
            next: Vector::from_vec(alloc::vec![theta_next, omega_next]),
            df_ds: Matrix::from_row_slice(2, 2, &[1.0 + dt * dt * dacc, dt, dt * dacc, 1.0]),
            df_da: Matrix::from_row_slice(2, 1, &[dt * dt * ka, dt * ka]),
            df_dw: Matrix::from_row_slice(2, 2, &[dt, dt * dt, 0.0, dt]),
        }
    }

    fn reward(&self, s: &Vector, a: &Vector) -> RewardEval {
        let (theta, omega, u) = (s[0], s[1], a[0]);
        RewardEval {
            value: -theta * theta - omega * omega / 10.0 - u * u / 100.0,
            dr_ds: Vector::from_vec(alloc::vec![-2.0 * theta, -omega / 5.0]),
            dr_da: Vector::from_vec(alloc::vec![-u / 50.0]),
        }
    }

    fn observe(&self, s: &Vector) -> (Vector, Matrix) {
        let (sin, cos) = (libm::sin(s[0]), libm::cos(s[0]));
        (
            Vector::from_vec(alloc::vec![cos, sin, s[1]]),
            Matrix::from_row_slice(3, 2, &[-sin, 0.0, cos, 0.0, 0.0, 1.0]),
        )
    }

    fn wrapped(&self) -> &[usize] {
        &[0]
    }
}

/// Physical constants of the planar quadrotor.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrotorConfig {
    pub gravity: f64,
    /// Thrust magnitude `c₀`.
    pub thrust: f64,
    /// Roll-angle command magnitude `c₁`.
    pub roll: f64,
    /// Roll controller gains `pd₀, pd₁, pd₂`.
    pub pd: [f64; 3],
    pub dt: f64,
    pub episode_length: usize,
    pub noise: f64,
    /// Half-widths of the feasible state box (default: the bounding box of the shipped safe
    /// set inflated by 25%).
    pub state_bounds: [f64; 8],
}

impl Default for QuadrotorConfig {
    fn default() -> Self {
        QuadrotorConfig {
            gravity: 9.81,
            thrust: 5.0,
            roll: 0.3,
            pd: [70.0, 17.0, 70.0],
            dt: 0.02,
            episode_length: 200,
            noise: 0.1,
            state_bounds: [5.56, 3.7, 0.3125, 3.81, 2.5, 0.49, 5.5, 3.625],
        }
    }
}

/// Planar quadrotor with state `(x, y, r, ẋ, ẏ, ṙ, x₀, y₀)`, a thrust and a roll command.
///
/// `ẍ = (a₀c₀ + g) sin r + w₀`, `ÿ = (a₀c₀ + g) cos r − g + w₁`,
/// `r̈ = a₁c₁pd₂ − pd₀ r − pd₁ ṙ`; the target `(x₀, y₀)` is constant.
#[derive(Debug, Clone)]
pub struct Quadrotor {
    pub config: QuadrotorConfig,
    params: EnvParams,
}

impl Quadrotor {
    pub fn new(config: QuadrotorConfig) -> Result<Self> {
        if !(config.dt > 0.0) || config.episode_length == 0 {
            return Err(Error::InvalidInput("dt and episode length must be positive".into()));
        }
        let mut noise = Vector::zeros(8);
        noise[3] = config.noise;
        noise[4] = config.noise;
        let params = EnvParams {
            dt: config.dt,
            episode_length: config.episode_length,
            feasible_states: AxisBox::new(Vector::zeros(8), Vector::from_row_slice(&config.state_bounds))?,
            feasible_actions: AxisBox::symmetric(2, 1.0)?,
            noise: AxisBox::new(Vector::zeros(8), noise)?,
        };
        Ok(Quadrotor { config, params })
    }
}

impl Environment for Quadrotor {
    fn name(&self) -> &'static str {
        "quadrotor"
    }

    fn params(&self) -> &EnvParams {
        &self.params
    }

    fn obs_dim(&self) -> usize {
        8
    }

    fn transition(&self, s: &Vector, a: &Vector, w: &Vector) -> Transition {
        let c = &self.config;
        let dt = self.params.dt;
        let [pd0, pd1, pd2] = c.pd;
        let r = s[2];
        let (sin, cos) = (libm::sin(r), libm::cos(r));
        let thrust = a[0] * c.thrust + c.gravity;
        let acc = [
            thrust * sin + w[3],
            thrust * cos - c.gravity + w[4],
            a[1] * c.roll * pd2 - pd0 * r - pd1 * s[5] + w[5],
        ];
        // Velocity rows (3..6) of the partials, positions follow as q + dt v⁺.
        let mut dv_ds = Matrix::zeros(3, 8);
        dv_ds[(0, 2)] = dt * thrust * cos;
        dv_ds[(1, 2)] = -dt * thrust * sin;
        dv_ds[(2, 2)] = -dt * pd0;
        dv_ds[(2, 5)] = -dt * pd1;
        for k in 0..3 {
            dv_ds[(k, 3 + k)] += 1.0;
        }
        let dv_da = Matrix::from_row_slice(
            3,
            2,
            &[
                dt * c.thrust * sin,
                0.0,
                dt * c.thrust * cos,
                0.0,
                0.0,
                dt * c.roll * pd2,
            ],
        );

        let mut next = s.clone();
        let mut df_ds = Matrix::identity(8, 8);
        let mut df_da = Matrix::zeros(8, 2);
        let mut df_dw = Matrix::zeros(8, 8);
        for k in 0..3 {
            let v_next = s[3 + k] + dt * acc[k];
            next[3 + k] = v_next;
            next[k] = s[k] + dt * (v_next + w[k]);
            df_ds.set_row(3 + k, &dv_ds.row(k));
            let mut pos_row = dv_ds.row(k) * dt;
            pos_row[k] += 1.0;
            df_ds.set_row(k, &pos_row);
            df_da.set_row(3 + k, &dv_da.row(k));
            df_da.set_row(k, &(dv_da.row(k) * dt));
            df_dw[(3 + k, 3 + k)] = dt;
            df_dw[(k, 3 + k)] = dt * dt;
            df_dw[(k, k)] = dt;
        }
        for k in 6..8 {
            next[k] = s[k] + dt * w[k];
            df_dw[(k, k)] = dt;
        }
        Transition {
            next,
            df_ds,
            df_da,
            df_dw,
        }
    }

    fn reward(&self, s: &Vector, a: &Vector) -> RewardEval {
        let c = &self.config;
        let (dx, dy) = (s[0] - s[6], s[1] - s[7]);
        let dist = libm::sqrt(dx * dx + dy * dy);
        let thrust = a[0] * c.thrust + c.gravity;
        let roll = a[1] * c.roll;
        let value = -2.5 * dist - (s[2] + s[3] + s[4] + s[5]) / 10.0 - thrust * thrust / 50.0 - roll * roll / 100.0;
        let mut dr_ds = Vector::zeros(8);
        if dist > 0.0 {
            dr_ds[0] = -2.5 * dx / dist;
            dr_ds[1] = -2.5 * dy / dist;
            dr_ds[6] = -dr_ds[0];
            dr_ds[7] = -dr_ds[1];
        }
        for k in 2..6 {
            dr_ds[k] = -0.1;
        }
        let dr_da = Vector::from_vec(alloc::vec![-thrust * c.thrust / 25.0, -roll * c.roll / 50.0]);
        RewardEval { value, dr_ds, dr_da }
    }

    fn observe(&self, s: &Vector) -> (Vector, Matrix) {
        (s.clone(), Matrix::identity(8, 8))
    }
}

/// Which environment a configuration refers to.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvConfig {
    Pendulum(PendulumConfig),
    Quadrotor(QuadrotorConfig),
}

impl EnvConfig {
    pub fn build(&self) -> Result<alloc::boxed::Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::Pendulum(c) => alloc::boxed::Box::new(Pendulum::new(c.clone())?),
            EnvConfig::Quadrotor(c) => alloc::boxed::Box::new(Quadrotor::new(c.clone())?),
        })
    }
}

/// Random stream of lane `lane` under seed `seed`; lanes are independent of batch size.
pub fn lane_rng(seed: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(lane);
    rng
}

/// Uniform draw from a box (zero-width coordinates stay at the centre).
pub fn sample_box(rng: &mut ChaCha8Rng, b: &AxisBox) -> Vector {
    Vector::from_fn(b.dim(), |i, _| {
        let h = b.half_widths()[i];
        if h > 0.0 {
            b.center()[i] + h * rng.random_range(-1.0..=1.0)
        } else {
            b.center()[i]
        }
    })
}

/// Batch of environment states together with the position inside the episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub states: Vec<Vector>,
    pub step: usize,
}

/// Initial states drawn uniformly in generator space of the safe state set, one
/// independent stream per lane, so lane `i` does not depend on the batch size.
pub fn reset(safe_states: &Zonotope, seed: u64, batch: usize) -> EnvState {
    let n = safe_states.num_generators();
    let states = (0..batch)
        .map(|i| {
            let mut rng = lane_rng(seed, i as u64);
            let beta = Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
            safe_states.point_at(&beta)
        })
        .collect();
    EnvState { states, step: 0 }
}

/// One integrated step with everything needed for learning and bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub next_state: Vector,
    pub reward: RewardEval,
    /// Jacobians of the confined next state with respect to state, action and noise.
    pub df_ds: Matrix,
    pub df_da: Matrix,
    pub clamped: usize,
}

/// Steps one lane: integrates, confines, and evaluates the reward at the new state.
pub fn step<E: Environment + ?Sized>(env: &E, s: &Vector, a: &Vector, w: &Vector) -> Result<StepOutput> {
    check_dim("step state", env.state_dim(), s.len())?;
    check_dim("step action", env.action_dim(), a.len())?;
    check_dim("step noise", env.state_dim(), w.len())?;
    if !env.params().noise.contains(w, 1e-12) {
        return Err(Error::InvalidInput("noise draw outside the noise set".into()));
    }
    let t = env.transition(s, a, w);
    if t.next.iter().any(|x| !x.is_finite()) {
        return Err(Error::Simulation(alloc::format!(
            "non-finite state after {}",
            env.name()
        )));
    }
    let confined = confine(env, &t.next);
    let pass = Matrix::from_diagonal(&confined.pass);
    let reward = env.reward(&confined.state, a);
    if !reward.value.is_finite() {
        return Err(Error::Simulation("non-finite reward".into()));
    }
    Ok(StepOutput {
        next_state: confined.state,
        reward,
        df_ds: &pass * t.df_ds,
        df_da: &pass * t.df_da,
        clamped: confined.clamped,
    })
}

/// Maps an observation batch to raw actions; used for rollouts that are not recorded
/// for differentiation.
pub trait Policy {
    fn act(&mut self, observations: &[Vector]) -> Vec<Vector>;
}

/// Safety setup used during rollouts.
#[derive(Debug, Clone)]
pub struct Shield<'a> {
    pub spec: &'a SafeActionSpec,
    pub kind: SafeguardKind,
}

/// One lane-step of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub state: Vector,
    pub raw_action: Vector,
    pub safe_action: Vector,
    pub noise: Vector,
    pub reward: f64,
    pub intervened: bool,
    /// The executed action failed the independent safety check.
    pub violation: bool,
    pub linearization: TransitionLinearization,
}

/// Rollout records, `steps[t][lane]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryBuffer {
    pub steps: Vec<Vec<StepRecord>>,
    pub clamped: usize,
}

impl TrajectoryBuffer {
    pub fn interventions(&self) -> usize {
        self.steps.iter().flatten().filter(|r| r.intervened).count()
    }

    pub fn violations(&self) -> usize {
        self.steps.iter().flatten().filter(|r| r.violation).count()
    }

    /// Undiscounted return per lane.
    pub fn returns(&self) -> Vec<f64> {
        let lanes = self.steps.first().map_or(0, |s| s.len());
        (0..lanes)
            .map(|i| self.steps.iter().map(|s| s[i].reward).sum())
            .collect()
    }
}

/// Runs `horizon` vector steps (fewer if the episode ends, which truncates every lane).
///
/// Noise is drawn from `noise_rngs[lane]`; the safeguard episode seed is `episode_seed`.
pub fn rollout_vector<E: Environment + ?Sized, P: Policy + ?Sized>(
    env: &E,
    policy: &mut P,
    shield: Option<&Shield<'_>>,
    state: &mut EnvState,
    noise_rngs: &mut [ChaCha8Rng],
    horizon: usize,
    episode_seed: u64,
) -> Result<TrajectoryBuffer> {
    let lanes = state.states.len();
    if noise_rngs.len() != lanes {
        return Err(Error::Dimension {
            context: "rollout noise streams",
            expected: lanes,
            actual: noise_rngs.len(),
        });
    }
    let mut buffer = TrajectoryBuffer::default();
    let steps = horizon.min(env.params().episode_length.saturating_sub(state.step));
    for _ in 0..steps {
        let obs: Vec<Vector> = state.states.iter().map(|s| env.observe(s).0).collect();
        let raw = policy.act(&obs);
        let mut records = Vec::with_capacity(lanes);
        for lane in 0..lanes {
            let s = state.states[lane].clone();
            let a = raw[lane].clone();
            let lin = linearize(env, &s, &a);
            let (safe_action, intervened, violation) = match shield {
                Some(sh) => {
                    let res = apply_safeguard(&sh.kind, sh.spec, Some(&lin), &a, episode_seed)?;
                    let ok = is_action_safe(sh.spec, Some(&lin), &res.safe_action)?.0;
                    (res.safe_action, res.intervened, !ok)
                }
                None => (a.clone(), false, false),
            };
            let w = sample_box(&mut noise_rngs[lane], &env.params().noise);
            let out = step(env, &s, &safe_action, &w)?;
            buffer.clamped += out.clamped;
            state.states[lane] = out.next_state;
            records.push(StepRecord {
                state: s,
                raw_action: a,
                safe_action,
                noise: w,
                reward: out.reward.value,
                intervened,
                violation,
                linearization: lin,
            });
        }
        state.step += 1;
        buffer.steps.push(records);
    }
    Ok(buffer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_in_range() {
        for x in [-10.0, -PI, -1.0, 0.0, 3.0, PI, 7.0] {
            let y = wrap_angle(x);
            assert!((-PI..PI).contains(&y));
            assert!((libm::sin(y) - libm::sin(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn pendulum_equilibrium() {
        let p = Pendulum::new(PendulumConfig::default()).unwrap();
        let z = Vector::zeros(2);
        let out = step(&p, &z, &Vector::zeros(1), &z).unwrap();
        assert_eq!(out.next_state, z);
        assert_eq!(out.reward.value, 0.0);
        let r = p.reward(&Vector::from_vec(alloc::vec![1.0, 0.0]), &Vector::zeros(1));
        assert_eq!(r.value, -1.0);
    }

    #[test]
    fn quadrotor_hover() {
        let q = Quadrotor::new(QuadrotorConfig::default()).unwrap();
        let s = Vector::from_vec(alloc::vec![0.5, -0.3, 0.0, 0.0, 0.0, 0.0, 0.5, -0.3]);
        let out = step(&q, &s, &Vector::zeros(2), &Vector::zeros(8)).unwrap();
        assert!((&out.next_state - &s).amax() < 1e-15);
        let g = q.config.gravity;
        assert!((out.reward.value + g * g / 50.0).abs() < 1e-12);
    }

    #[test]
    fn clamping_zeroes_jacobian_rows() {
        let q = Quadrotor::new(QuadrotorConfig::default()).unwrap();
        let mut s = Vector::zeros(8);
        s[3] = 3.8;
        s[0] = 5.55;
        let out = step(&q, &s, &Vector::from_vec(alloc::vec![1.0, 1.0]), &Vector::zeros(8)).unwrap();
        assert!(out.clamped >= 1);
        assert_eq!(out.df_ds.row(0).amax(), 0.0);
    }
}
