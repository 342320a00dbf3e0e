//! Reverse-mode automatic differentiation over matrix-valued nodes, small MLPs, a
//! tanh-squashed Gaussian policy head and the Adam update rule.
//!
//! Every node holds a `rows × cols` matrix; batched quantities keep one sample per row.
//! Operations whose derivatives are known in closed form elsewhere (environment steps,
//! safeguards) enter the tape as [`Tape::custom`] nodes carrying one Jacobian per row.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::zonoset::AxisBox;
use crate::{Matrix, Vector};

/// Handle to a tape node; invalid once the tape is cleared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    idx: u32,
    generation: u32,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    /// `x + 1·row`, the row broadcast over the batch.
    AddRow(usize, usize),
    /// `x ⊙ 1·row`.
    MulRow(usize, usize),
    Scale(usize, f64),
    Elu(usize),
    Tanh(usize),
    Exp(usize),
    Square(usize),
    Sum(usize),
    /// Output row `i` depends on input row `i` through `jacobians[k][i]`.
    Custom(Vec<(usize, Vec<Matrix>)>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Recording of a computation for reverse-mode differentiation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    generation: u32,
}

/// Gradients of one backward pass, indexed by the variables of the tape that made them.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
    generation: u32,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not influence the output.
    pub fn wrt(&self, v: Var) -> Result<Matrix> {
        if v.generation != self.generation || v.idx as usize >= self.grads.len() {
            return Err(Error::StaleVariable);
        }
        let i = v.idx as usize;
        Ok(self.grads[i].clone().unwrap_or_else(|| {
            let (r, c) = self.shapes[i];
            Matrix::zeros(r, c)
        }))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node; variables created before the call become stale.
    pub fn clear(&mut self) {
        self.nodes = Vec::new();
        self.generation = self.generation.wrapping_add(1);
    }

    fn id(&self, v: Var) -> Result<usize> {
        if v.generation != self.generation || v.idx as usize >= self.nodes.len() {
            return Err(Error::StaleVariable);
        }
        Ok(v.idx as usize)
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var {
            idx: (self.nodes.len() - 1) as u32,
            generation: self.generation,
        }
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.leaf(Matrix::from_element(1, 1, x))
    }

    pub fn value(&self, v: Var) -> Result<&Matrix> {
        Ok(&self.nodes[self.id(v)?].value)
    }

    fn same_shape(&self, a: usize, b: usize, context: &'static str) -> Result<()> {
        let (sa, sb) = (self.nodes[a].value.shape(), self.nodes[b].value.shape());
        if sa != sb {
            return Err(Error::Dimension {
                context,
                expected: sa.0 * sa.1,
                actual: sb.0 * sb.1,
            });
        }
        Ok(())
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        context: &'static str,
        f: impl Fn(&Matrix, &Matrix) -> Matrix,
        op: fn(usize, usize) -> Op,
    ) -> Result<Var> {
        let (i, j) = (self.id(a)?, self.id(b)?);
        self.same_shape(i, j, context)?;
        let value = f(&self.nodes[i].value, &self.nodes[j].value);
        Ok(self.push(value, op(i, j)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x.component_mul(y), Op::Mul)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (i, j) = (self.id(a)?, self.id(b)?);
        let (x, y) = (&self.nodes[i].value, &self.nodes[j].value);
        if x.ncols() != y.nrows() {
            return Err(Error::Dimension {
                context: "matmul",
                expected: x.ncols(),
                actual: y.nrows(),
            });
        }
        let value = x * y;
        Ok(self.push(value, Op::MatMul(i, j)))
    }

    fn row_broadcast(&mut self, x: Var, row: Var, context: &'static str, mul: bool) -> Result<Var> {
        let (i, j) = (self.id(x)?, self.id(row)?);
        let (xv, rv) = (&self.nodes[i].value, &self.nodes[j].value);
        if rv.nrows() != 1 || rv.ncols() != xv.ncols() {
            return Err(Error::Dimension {
                context,
                expected: xv.ncols(),
                actual: rv.ncols(),
            });
        }
        let mut value = xv.clone();
        for mut r in value.row_iter_mut() {
            if mul {
                r.component_mul_assign(rv);
            } else {
                r += rv;
            }
        }
        let op = if mul { Op::MulRow(i, j) } else { Op::AddRow(i, j) };
        Ok(self.push(value, op))
    }

    /// `x + row` with the `1 × n` row added to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.row_broadcast(x, row, "add_row", false)
    }

    /// `x ⊙ row` with the `1 × n` row multiplying every row of `x`.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.row_broadcast(x, row, "mul_row", true)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: fn(usize) -> Op) -> Result<Var> {
        let i = self.id(a)?;
        let value = self.nodes[i].value.map(f);
        Ok(self.push(value, op(i)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let i = self.id(a)?;
        let value = &self.nodes[i].value * k;
        Ok(self.push(value, Op::Scale(i, k)))
    }

    pub fn elu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, elu, Op::Elu)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, libm::tanh, Op::Tanh)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, libm::exp, Op::Exp)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x * x, Op::Square)
    }

    /// Sum of all entries as a `1 × 1` node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let i = self.id(a)?;
        let value = Matrix::from_element(1, 1, self.nodes[i].value.sum());
        Ok(self.push(value, Op::Sum(i)))
    }

    /// Node with a caller-supplied value whose row `r` depends on row `r` of each input
    /// through the given per-row Jacobians (`out_cols × in_cols`).
    pub fn custom(&mut self, value: Matrix, inputs: &[(Var, Vec<Matrix>)]) -> Result<Var> {
        let mut recorded = Vec::with_capacity(inputs.len());
        for (v, jacobians) in inputs {
            let i = self.id(*v)?;
            let input = &self.nodes[i].value;
            if jacobians.len() != value.nrows() || input.nrows() != value.nrows() {
                return Err(Error::Dimension {
                    context: "custom node rows",
                    expected: value.nrows(),
                    actual: jacobians.len().min(input.nrows()),
                });
            }
            if jacobians.iter().any(|j| j.shape() != (value.ncols(), input.ncols())) {
                return Err(Error::Dimension {
                    context: "custom node Jacobian",
                    expected: value.ncols() * input.ncols(),
                    actual: 0,
                });
            }
            recorded.push((i, jacobians.clone()));
        }
        Ok(self.push(value, Op::Custom(recorded)))
    }

    /// Gradients of the `1 × 1` node `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let o = self.id(output)?;
        if self.nodes[o].value.shape() != (1, 1) {
            return Err(Error::InvalidInput("backward needs a scalar output".into()));
        }
        self.backward_with(output, Matrix::from_element(1, 1, 1.0))
    }

    /// Vector-Jacobian product of `output` with the seed `seed`.
    pub fn backward_with(&self, output: Var, seed: Matrix) -> Result<Gradients> {
        let o = self.id(output)?;
        if seed.shape() != self.nodes[o].value.shape() {
            return Err(Error::InvalidInput("seed shape differs from the output".into()));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; o + 1];
        grads[o] = Some(seed);
        for k in (0..=o).rev() {
            let Some(g) = grads[k].take() else {
                continue;
            };
            let node = &self.nodes[k];
            let val = |i: usize| &self.nodes[i].value;
            let mut acc = |i: usize, d: Matrix| match &mut grads[i] {
                Some(x) => *x += d,
                slot => *slot = Some(d),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, -g.clone());
                }
                Op::Mul(a, b) => {
                    acc(*a, g.component_mul(val(*b)));
                    acc(*b, g.component_mul(val(*a)));
                }
                Op::MatMul(a, b) => {
                    acc(*a, &g * val(*b).transpose());
                    acc(*b, val(*a).transpose() * &g);
                }
                Op::AddRow(x, row) => {
                    acc(*x, g.clone());
                    acc(*row, row_sum(&g));
                }
                Op::MulRow(x, row) => {
                    let r = val(*row);
                    let mut gx = g.clone();
                    for mut gr in gx.row_iter_mut() {
                        gr.component_mul_assign(r);
                    }
                    acc(*x, gx);
                    acc(*row, row_sum(&g.component_mul(val(*x))));
                }
                Op::Scale(a, s) => acc(*a, &g * *s),
                Op::Elu(a) => acc(*a, g.zip_map(val(*a), |gi, x| gi * elu_grad(x))),
                Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |gi, y| gi * (1.0 - y * y))),
                Op::Exp(a) => acc(*a, g.component_mul(&node.value)),
                Op::Square(a) => acc(*a, g.zip_map(val(*a), |gi, x| 2.0 * gi * x)),
                Op::Sum(a) => {
                    let (r, c) = val(*a).shape();
                    acc(*a, Matrix::from_element(r, c, g[(0, 0)]));
                }
                Op::Custom(inputs) => {
                    for (i, jacobians) in inputs {
                        let cols = val(*i).ncols();
                        let mut gi = Matrix::zeros(g.nrows(), cols);
                        for (r, j) in jacobians.iter().enumerate() {
                            let row = g.row(r) * j;
                            gi.set_row(r, &row);
                        }
                        acc(*i, gi);
                    }
                }
            }
            grads[k] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes[..=o].iter().map(|n| n.value.shape()).collect(),
            generation: self.generation,
        })
    }
}

fn row_sum(g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, g.ncols());
    for r in g.row_iter() {
        out += r;
    }
    out
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        libm::expm1(x)
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        libm::exp(x)
    }
}

/// Layer widths of a fully connected network with ELU hidden activations and a linear
/// output layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArch {
    pub widths: Vec<usize>,
}

impl MlpArch {
    /// `input → hidden… → output`.
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        MlpArch { widths }
    }

    pub fn input(&self) -> usize {
        self.widths[0]
    }

    pub fn output(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    /// Length of the flat parameter vector: per layer a row-major weight block followed
    /// by the bias.
    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.widths.windows(2).map(move |w| {
            let start = offset;
            offset += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }

    /// Uniform fan-in initialisation with zero biases; the output layer is scaled by
    /// `output_gain`.
    pub fn init(&self, seed: u64, output_gain: f64) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flat = Vector::zeros(self.num_params());
        let count = self.widths.len() - 1;
        for (l, (start, fan_in, fan_out)) in self.layers().enumerate() {
            let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            let gain = if l + 1 == count { output_gain } else { 1.0 };
            for k in 0..fan_in * fan_out {
                flat[start + k] = gain * rng.random_range(-bound..bound);
            }
        }
        flat
    }

    fn weight(flat: &Vector, start: usize, fan_in: usize, fan_out: usize) -> Matrix {
        Matrix::from_row_slice(fan_in, fan_out, &flat.as_slice()[start..start + fan_in * fan_out])
    }

    fn bias(flat: &Vector, start: usize, fan_in: usize, fan_out: usize) -> Matrix {
        let b = start + fan_in * fan_out;
        Matrix::from_row_slice(1, fan_out, &flat.as_slice()[b..b + fan_out])
    }

    /// Plain forward pass on a batch (one sample per row).
    pub fn forward(&self, flat: &Vector, x: &Matrix) -> Matrix {
        let count = self.widths.len() - 1;
        let mut h = x.clone();
        for (l, (start, fan_in, fan_out)) in self.layers().enumerate() {
            let w = Self::weight(flat, start, fan_in, fan_out);
            let b = Self::bias(flat, start, fan_in, fan_out);
            h *= w;
            for mut r in h.row_iter_mut() {
                r += &b;
            }
            if l + 1 < count {
                h.apply(|v| *v = elu(*v));
            }
        }
        h
    }

    /// Records the parameters as leaves, one `(weight, bias)` pair per layer.
    pub fn leaves(&self, tape: &mut Tape, flat: &Vector) -> Vec<(Var, Var)> {
        self.layers()
            .map(|(start, fan_in, fan_out)| {
                (
                    tape.leaf(Self::weight(flat, start, fan_in, fan_out)),
                    tape.leaf(Self::bias(flat, start, fan_in, fan_out)),
                )
            })
            .collect()
    }

    /// Forward pass on the tape.
    pub fn forward_tape(&self, tape: &mut Tape, layers: &[(Var, Var)], x: Var) -> Result<Var> {
        let mut h = x;
        for (l, &(w, b)) in layers.iter().enumerate() {
            h = tape.matmul(h, w)?;
            h = tape.add_row(h, b)?;
            if l + 1 < layers.len() {
                h = tape.elu(h)?;
            }
        }
        Ok(h)
    }

    /// Flattens layer gradients back into the parameter layout.
    pub fn gather(&self, grads: &Gradients, layers: &[(Var, Var)]) -> Result<Vector> {
        let mut flat = Vector::zeros(self.num_params());
        for ((start, fan_in, fan_out), &(w, b)) in self.layers().zip(layers) {
            let gw = grads.wrt(w)?;
            let gb = grads.wrt(b)?;
            for i in 0..fan_in {
                for j in 0..fan_out {
                    flat[start + i * fan_out + j] = gw[(i, j)];
                }
            }
            for j in 0..fan_out {
                flat[start + fan_in * fan_out + j] = gb[(0, j)];
            }
        }
        Ok(flat)
    }
}

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Gaussian policy squashed by `tanh` onto the feasible action box, with a
/// state-independent log standard deviation stored after the mean network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub arch: MlpArch,
    pub actions: AxisBox,
}

/// Policy parameters recorded as tape leaves, shared by every step of a window.
#[derive(Debug, Clone)]
pub struct TapedPolicy {
    pub layers: Vec<(Var, Var)>,
    pub log_std: Var,
}

impl GaussianPolicy {
    pub fn new(obs_dim: usize, hidden: &[usize], actions: AxisBox) -> Self {
        GaussianPolicy {
            arch: MlpArch::new(obs_dim, hidden, actions.dim()),
            actions,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.actions.dim()
    }

    pub fn num_params(&self) -> usize {
        self.arch.num_params() + self.action_dim()
    }

    pub fn init(&self, seed: u64, log_std: f64) -> Vector {
        let net = self.arch.init(seed, 0.1);
        let mut flat = Vector::from_element(self.num_params(), log_std.clamp(LOG_STD_MIN, LOG_STD_MAX));
        flat.rows_mut(0, net.len()).copy_from(&net);
        flat
    }

    fn net_params(&self, flat: &Vector) -> Vector {
        flat.rows(0, self.arch.num_params()).into_owned()
    }

    pub fn log_std(&self, flat: &Vector) -> Vector {
        flat.rows(self.arch.num_params(), self.action_dim())
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
    }

    /// Clamps the stored log standard deviation into its admissible range.
    pub fn clamp_log_std(&self, flat: &mut Vector) {
        let n = self.arch.num_params();
        for i in 0..self.action_dim() {
            flat[n + i] = flat[n + i].clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Standard normal draws for a batch, reproducible from `seed`.
    pub fn noise(&self, batch: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(batch, self.action_dim(), |_, _| StandardNormal.sample(&mut rng))
    }

    /// Squashed, rescaled actions for pre-activations `u`.
    fn squash(&self, u: &Matrix) -> Matrix {
        let (c, h) = (self.actions.center(), self.actions.half_widths());
        Matrix::from_fn(u.nrows(), u.ncols(), |i, j| c[j] + h[j] * libm::tanh(u[(i, j)]))
    }

    /// Deterministic action `tanh(mean)` rescaled to the box.
    pub fn mean_action(&self, flat: &Vector, obs: &Matrix) -> Matrix {
        self.squash(&self.arch.forward(&self.net_params(flat), obs))
    }

    /// Reparameterised draws `tanh(mean + σ ε)` rescaled to the box, and their log
    /// densities including the change-of-variables correction.
    pub fn sample(&self, flat: &Vector, obs: &Matrix, eps: &Matrix) -> (Matrix, Vector) {
        let mean = self.arch.forward(&self.net_params(flat), obs);
        let log_std = self.log_std(flat);
        let u = Matrix::from_fn(mean.nrows(), mean.ncols(), |i, j| {
            mean[(i, j)] + libm::exp(log_std[j]) * eps[(i, j)]
        });
        let h = self.actions.half_widths();
        let half_log_2pi = 0.5 * libm::log(2.0 * core::f64::consts::PI);
        let logp = Vector::from_fn(u.nrows(), |i, _| {
            (0..u.ncols())
                .map(|j| {
                    let x = u[(i, j)];
                    // log(1 − tanh² x) = 2(log 2 − x − softplus(−2x))
                    let log_dtanh = 2.0 * (core::f64::consts::LN_2 - x - softplus(-2.0 * x));
                    -0.5 * eps[(i, j)] * eps[(i, j)] - log_std[j] - half_log_2pi - log_dtanh - libm::log(h[j])
                })
                .sum()
        });
        (self.squash(&u), logp)
    }

    /// Records the parameters on a tape.
    pub fn leaves(&self, tape: &mut Tape, flat: &Vector) -> TapedPolicy {
        let layers = self.arch.leaves(tape, &self.net_params(flat));
        let log_std = tape.leaf(Matrix::from_row_slice(
            1,
            self.action_dim(),
            self.log_std(flat).as_slice(),
        ));
        TapedPolicy { layers, log_std }
    }

    /// Same draws as [`GaussianPolicy::sample`] recorded on a tape for differentiation.
    pub fn sample_tape(&self, tape: &mut Tape, taped: &TapedPolicy, obs: Var, eps: &Matrix) -> Result<Var> {
        let mean = self.arch.forward_tape(tape, &taped.layers, obs)?;
        let std = tape.exp(taped.log_std)?;
        let e = tape.leaf(eps.clone());
        let spread = tape.mul_row(e, std)?;
        let u = tape.add(mean, spread)?;
        let t = tape.tanh(u)?;
        let (c, h) = (self.actions.center(), self.actions.half_widths());
        let h_row = tape.leaf(Matrix::from_row_slice(1, h.len(), h.as_slice()));
        let c_row = tape.leaf(Matrix::from_row_slice(1, c.len(), c.as_slice()));
        let scaled = tape.mul_row(t, h_row)?;
        tape.add_row(scaled, c_row)
    }

    /// Flat gradient in the parameter layout.
    pub fn gather(&self, flat: &Vector, grads: &Gradients, taped: &TapedPolicy) -> Result<Vector> {
        let net = self.arch.gather(grads, &taped.layers)?;
        let mut out = Vector::zeros(self.num_params());
        out.rows_mut(0, net.len()).copy_from(&net);
        let g = grads.wrt(taped.log_std)?;
        let n = self.arch.num_params();
        for j in 0..self.action_dim() {
            // The clamp passes no gradient outside its range.
            let inside = (LOG_STD_MIN..=LOG_STD_MAX).contains(&flat[n + j]);
            out[n + j] = if inside { g[(0, j)] } else { 0.0 };
        }
        Ok(out)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vector,
    v: Vector,
    t: u64,
    /// Updates refused because the gradient was not finite.
    pub skipped: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vector::zeros(n),
            v: Vector::zeros(n),
            t: 0,
            skipped: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update in place; returns `false` (and leaves everything unchanged) for
    /// a non-finite gradient.
    pub fn update(&mut self, params: &mut Vector, grads: &Vector) -> bool {
        assert_eq!(params.len(), grads.len(), "parameter and gradient lengths differ");
        if grads.iter().any(|g| !g.is_finite()) {
            self.skipped += 1;
            return false;
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - libm::pow(b1, self.t as f64);
        let c2 = 1.0 - libm::pow(b2, self.t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.scalar(3.0);
        let y = t.square(x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x).unwrap()[(0, 0)], 6.0);
    }

    #[test]
    fn stale_variables_are_rejected() {
        let mut t = Tape::new();
        let x = t.scalar(1.0);
        t.clear();
        assert!(matches!(t.square(x), Err(Error::StaleVariable)));
        assert!(t.is_empty());
    }

    #[test]
    fn identity_custom_node_passes_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let v = t.value(x).unwrap().clone();
        let y = t.custom(v, &[(x, vec![Matrix::identity(2, 2); 2])]).unwrap();
        let s = t.square(y).unwrap();
        let out = t.sum(s).unwrap();
        let g = t.backward(out).unwrap();
        assert_eq!(g.wrt(x).unwrap(), Matrix::from_row_slice(2, 2, &[2.0, 4.0, 6.0, 8.0]));
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let mut p = Vector::from_vec(vec![1.0]);
        let mut opt = Adam::new(1, 0.1);
        opt.update(&mut p, &Vector::from_vec(vec![3.0]));
        assert!((p[0] - 0.9).abs() < 1e-6);
        let before = p.clone();
        opt.update(&mut p, &Vector::zeros(1));
        assert!(p[0] < before[0]);
        let mut q = Vector::from_vec(vec![1.0]);
        let mut fresh = Adam::new(1, 0.1);
        fresh.update(&mut q, &Vector::zeros(1));
        assert_eq!(q[0], 1.0);
        assert!(!fresh.update(&mut q, &Vector::from_vec(vec![f64::NAN])));
        assert_eq!(fresh.skipped, 1);
    }
}
