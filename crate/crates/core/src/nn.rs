//! Fully-connected networks over flat parameter vectors.
//!
//! Parameters are laid out layer by layer; within a layer the `out x in`
//! weight matrix comes first (row-major, `W[o][i]` at `o * in + i`), followed
//! by the `out` biases. Hidden layers apply the activation, the output layer
//! is linear.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::DenseMatrix;

/// Lower bound applied to predicted variances.
pub const VAR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Likelihood attached to the network outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Head {
    /// Two outputs: mean and log-variance.
    GaussianRegression,
    /// One output (the mean) with a fixed noise variance.
    Homoscedastic { noise_var: f64 },
    /// One logit; targets are 0 or 1.
    Binary,
    /// One logit per class; targets are class indices stored as `f64`.
    Multiclass,
}

impl Head {
    pub fn is_regression(&self) -> bool {
        matches!(self, Head::GaussianRegression | Head::Homoscedastic { .. })
    }

    fn check_output_dim(&self, k: usize) -> Result<()> {
        let ok = match self {
            Head::GaussianRegression => k == 2,
            Head::Homoscedastic { noise_var } => k == 1 && *noise_var > 0.0,
            Head::Binary => k == 1,
            Head::Multiclass => k >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArchitecture(format!(
                "head {self:?} incompatible with {k} outputs"
            )))
        }
    }

    /// Predictive mean and variance for regression heads.
    pub fn mean_var(&self, out: &[f64]) -> (f64, f64) {
        match self {
            Head::GaussianRegression => (out[0], out[1].exp().max(VAR_FLOOR)),
            Head::Homoscedastic { noise_var } => (out[0], noise_var.max(VAR_FLOOR)),
            _ => (f64::NAN, f64::NAN),
        }
    }

    /// `log p(y | out)` without the Gaussian normalising constant.
    pub fn log_lik(&self, out: &[f64], y: f64) -> f64 {
        match self {
            Head::GaussianRegression | Head::Homoscedastic { .. } => {
                let (mu, var) = self.mean_var(out);
                let r = y - mu;
                -0.5 * (var.ln() + r * r / var)
            }
            Head::Binary => {
                let z = out[0];
                if y > 0.5 {
                    -softplus(-z)
                } else {
                    -softplus(z)
                }
            }
            Head::Multiclass => {
                let c = y as usize;
                out[c] - log_sum_exp(out)
            }
        }
    }

    /// Gradient of [`Head::log_lik`] with respect to the outputs.
    pub fn dlog_lik(&self, out: &[f64], y: f64) -> Vec<f64> {
        match self {
            Head::GaussianRegression => {
                let raw = out[1].exp();
                let var = raw.max(VAR_FLOOR);
                let r = y - out[0];
                let ds = if raw > VAR_FLOOR {
                    0.5 * (r * r / var - 1.0)
                } else {
                    0.0
                };
                vec![r / var, ds]
            }
            Head::Homoscedastic { .. } => {
                let (mu, var) = self.mean_var(out);
                vec![(y - mu) / var]
            }
            Head::Binary => vec![y - sigmoid(out[0])],
            Head::Multiclass => {
                let mut g = softmax(out);
                g.iter_mut().for_each(|v| *v = -*v);
                g[y as usize] += 1.0;
                g
            }
        }
    }

    /// Expected negative Hessian of the log-likelihood in output space
    /// (the Fisher block). Independent of the target and always PSD.
    pub fn output_curvature(&self, out: &[f64]) -> DenseMatrix {
        match self {
            Head::GaussianRegression => {
                let raw = out[1].exp();
                let var = raw.max(VAR_FLOOR);
                let ss = if raw > VAR_FLOOR { 0.5 } else { 0.0 };
                DenseMatrix::from_diag(&[1.0 / var, ss])
            }
            Head::Homoscedastic { .. } => {
                let (_, var) = self.mean_var(out);
                DenseMatrix::from_diag(&[1.0 / var])
            }
            Head::Binary => {
                let p = sigmoid(out[0]);
                DenseMatrix::from_diag(&[p * (1.0 - p)])
            }
            Head::Multiclass => {
                let p = softmax(out);
                let k = p.len();
                let mut m = DenseMatrix::zeros(k, k);
                for i in 0..k {
                    for j in 0..k {
                        let v = if i == j { p[i] - p[i] * p[j] } else { -p[i] * p[j] };
                        m.set(i, j, v);
                    }
                }
                m
            }
        }
    }

    /// Draws a target from the model's predictive distribution.
    pub fn sample<R: Rng + ?Sized>(&self, out: &[f64], rng: &mut R) -> f64 {
        match self {
            Head::GaussianRegression | Head::Homoscedastic { .. } => {
                let (mu, var) = self.mean_var(out);
                Normal::new(mu, var.sqrt()).map_or(mu, |n| n.sample(rng))
            }
            Head::Binary => {
                if rng.random::<f64>() < sigmoid(out[0]) {
                    1.0
                } else {
                    0.0
                }
            }
            Head::Multiclass => {
                let p = softmax(out);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (c, pc) in p.iter().enumerate() {
                    acc += pc;
                    if u < acc {
                        return c as f64;
                    }
                }
                (p.len() - 1) as f64
            }
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

/// Location of one layer's parameters in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSlice {
    pub layer_index: usize,
    pub offset: usize,
    pub length: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerSlice {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.length
    }

    pub fn bias_offset(&self) -> usize {
        self.offset + self.fan_in * self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArchitectureSpec", into = "ArchitectureSpec")]
pub struct MlpArchitecture {
    layer_sizes: Vec<usize>,
    activation: Activation,
    head: Head,
    layers: Vec<LayerSlice>,
}

/// Serialised form of [`MlpArchitecture`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    pub head: Head,
}

impl TryFrom<ArchitectureSpec> for MlpArchitecture {
    type Error = Error;

    fn try_from(s: ArchitectureSpec) -> Result<Self> {
        MlpArchitecture::new(s.layer_sizes, s.activation, s.head)
    }
}

impl From<MlpArchitecture> for ArchitectureSpec {
    fn from(a: MlpArchitecture) -> Self {
        ArchitectureSpec {
            layer_sizes: a.layer_sizes,
            activation: a.activation,
            head: a.head,
        }
    }
}

impl MlpArchitecture {
    /// `layer_sizes` is `[input, hidden..., output]`. Zero hidden layers gives
    /// a linear model.
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, head: Head) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArchitecture(
                "need at least an input and an output size".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArchitecture("layer sizes must be positive".into()));
        }
        head.check_output_dim(*layer_sizes.last().unwrap())?;
        let layers = compute_layers(&layer_sizes);
        Ok(Self {
            layer_sizes,
            activation,
            head,
            layers,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.length).sum()
    }

    pub fn layers(&self) -> &[LayerSlice] {
        &self.layers
    }

    pub fn last_layer_slice(&self) -> LayerSlice {
        *self.layers.last().unwrap()
    }
}

fn compute_layers(sizes: &[usize]) -> Vec<LayerSlice> {
    let mut offset = 0;
    sizes
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let length = w[0] * w[1] + w[1];
            let s = LayerSlice {
                layer_index: l,
                offset,
                length,
                fan_in: w[0],
                fan_out: w[1],
            };
            offset += length;
            s
        })
        .collect()
}

/// Glorot-uniform weights and zero biases.
pub fn init_params(arch: &MlpArchitecture, seed: u64) -> Vec<f64> {
    init_params_stream(arch, seed, 0)
}

/// Like [`init_params`] but drawing from an independent ChaCha stream, so
/// particle `i` can use stream `i` under one seed.
pub fn init_params_stream(arch: &MlpArchitecture, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut params = vec![0.0; arch.num_params()];
    for layer in arch.layers() {
        let limit = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
        let w = &mut params[layer.offset..layer.bias_offset()];
        for v in w.iter_mut() {
            *v = rng.random_range(-limit..limit);
        }
    }
    params
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input to each layer.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer; the last one is the network output.
    pub pre: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.pre.last().unwrap()
    }

    /// Back-propagates `out_grad` (a gradient with respect to the outputs) and
    /// returns the gradient with respect to every layer's pre-activation.
    pub fn deltas(
        &self,
        arch: &MlpArchitecture,
        params: &[f64],
        out_grad: &[f64],
    ) -> Vec<Vec<f64>> {
        let layers = arch.layers();
        let n = layers.len();
        let mut deltas = vec![Vec::new(); n];
        deltas[n - 1] = out_grad.to_vec();
        for l in (1..n).rev() {
            let layer = &layers[l];
            let w = &params[layer.offset..layer.bias_offset()];
            let d = &deltas[l];
            let mut g = vec![0.0; layer.fan_in];
            for (o, &dv) in d.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                for (gi, wi) in g.iter_mut().zip(row) {
                    *gi += dv * wi;
                }
            }
            let z = &self.pre[l - 1];
            let a = &self.inputs[l];
            for ((gi, &zi), &ai) in g.iter_mut().zip(z).zip(a) {
                *gi *= arch.activation().derivative(zi, ai);
            }
            deltas[l - 1] = g;
        }
        deltas
    }

    /// `grad += scale * dz/dparams^T delta`, layer by layer.
    pub fn accumulate_param_grad(
        &self,
        arch: &MlpArchitecture,
        deltas: &[Vec<f64>],
        scale: f64,
        grad: &mut [f64],
    ) {
        for (l, layer) in arch.layers().iter().enumerate() {
            let a = &self.inputs[l];
            let d = &deltas[l];
            for (o, &dv) in d.iter().enumerate() {
                let s = scale * dv;
                if s == 0.0 {
                    continue;
                }
                let row = &mut grad[layer.offset + o * layer.fan_in..layer.offset + (o + 1) * layer.fan_in];
                for (gi, ai) in row.iter_mut().zip(a) {
                    *gi += s * ai;
                }
                grad[layer.bias_offset() + o] += s;
            }
        }
    }
}

pub fn forward_tape(arch: &MlpArchitecture, params: &[f64], x: &[f64]) -> Result<Tape> {
    check_len("forward params", arch.num_params(), params.len())?;
    check_len("forward input", arch.input_dim(), x.len())?;
    let layers = arch.layers();
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    let mut a = x.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        let w = &params[layer.offset..layer.bias_offset()];
        let b = &params[layer.bias_offset()..layer.offset + layer.length];
        let z: Vec<f64> = (0..layer.fan_out)
            .map(|o| {
                let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                b[o] + row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>()
            })
            .collect();
        let next = if l + 1 < layers.len() {
            z.iter().map(|&v| arch.activation().apply(v)).collect()
        } else {
            Vec::new()
        };
        inputs.push(std::mem::replace(&mut a, next));
        pre.push(z);
    }
    let tape = Tape { inputs, pre };
    if tape.output().iter().any(|v| !v.is_finite()) {
        return Err(Error::PoisonedParameters("forward pass"));
    }
    Ok(tape)
}

pub fn forward(arch: &MlpArchitecture, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let mut tape = forward_tape(arch, params, x)?;
    Ok(tape.pre.pop().unwrap_or_default())
}

/// Row-wise forward pass; returns an `n x k` matrix.
pub fn forward_batch(arch: &MlpArchitecture, params: &[f64], xs: &DenseMatrix) -> Result<DenseMatrix> {
    let k = arch.output_dim();
    let mut out = Vec::with_capacity(xs.rows() * k);
    for i in 0..xs.rows() {
        out.extend(forward(arch, params, xs.row(i))?);
    }
    DenseMatrix::from_vec(xs.rows(), k, out)
}

/// Gradient of `log p(y | g(x))` with respect to the parameters.
pub fn per_sample_grad(arch: &MlpArchitecture, params: &[f64], x: &[f64], y: f64) -> Result<Vec<f64>> {
    let tape = forward_tape(arch, params, x)?;
    let og = arch.head().dlog_lik(tape.output(), y);
    let deltas = tape.deltas(arch, params, &og);
    let mut grad = vec![0.0; params.len()];
    tape.accumulate_param_grad(arch, &deltas, 1.0, &mut grad);
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::PoisonedParameters("per-sample gradient"));
    }
    Ok(grad)
}

/// `k x d` Jacobian of the network outputs with respect to the parameters.
pub fn per_sample_output_jacobian(arch: &MlpArchitecture, params: &[f64], x: &[f64]) -> Result<DenseMatrix> {
    let tape = forward_tape(arch, params, x)?;
    Ok(jacobian_from_tape(arch, params, &tape))
}

pub(crate) fn jacobian_from_tape(arch: &MlpArchitecture, params: &[f64], tape: &Tape) -> DenseMatrix {
    let k = arch.output_dim();
    let d = params.len();
    let mut jac = DenseMatrix::zeros(k, d);
    let mut unit = vec![0.0; k];
    for c in 0..k {
        unit.iter_mut().for_each(|v| *v = 0.0);
        unit[c] = 1.0;
        let deltas = tape.deltas(arch, params, &unit);
        tape.accumulate_param_grad(arch, &deltas, 1.0, &mut jac.data_mut()[c * d..(c + 1) * d]);
    }
    jac
}

/// Serialised ensemble parameters.
///
/// Floats are written in shortest round-trip decimal form, which parses back
/// to the identical bit pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub architecture: MlpArchitecture,
    pub seed: u64,
    pub particles: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        let d = ck.architecture.num_params();
        for p in &ck.particles {
            check_len("checkpoint particle", d, p.len())?;
        }
        Ok(ck)
    }
}
