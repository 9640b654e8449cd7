//! Dense feed-forward networks with reverse-mode gradients and Adam.
//!
//! Parameters live in one flat `f64` vector, laid out layer by layer: the
//! layer's weight matrix (row-major, `fan_out x fan_in`) followed by its bias
//! vector. Gradients share that layout, so optimizers and soft updates work
//! on plain slices.

use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, AcerError, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

impl From<HiddenActivation> for Activation {
    fn from(a: HiddenActivation) -> Self {
        match a {
            HiddenActivation::Relu => Activation::Relu,
            HiddenActivation::Tanh => Activation::Tanh,
        }
    }
}

impl From<OutputActivation> for Activation {
    fn from(a: OutputActivation) -> Self {
        match a {
            OutputActivation::Identity => Activation::Identity,
            OutputActivation::Tanh => Activation::Tanh,
        }
    }
}

/// Shape of a network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        output_dim: usize,
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        let spec = MlpSpec {
            input_dim,
            hidden_dims,
            output_dim,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(AcerError::Config(
                "an MLP needs at least one hidden layer".into(),
            ));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(AcerError::Config("all MLP dimensions must be >= 1".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| fan_in * fan_out + fan_out)
            .sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer == self.hidden_dims.len() {
            self.output_activation.into()
        } else {
            self.hidden_activation.into()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(AcerError::Config(format!("invalid Adam config {self:?}")))
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    fn zeros(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward_into`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vec<f64>>,
    preactivations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an output layer")
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }

    /// Smallest |pre-activation| over the hidden layers.
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        let hidden = self.preactivations.len() - 1;
        self.preactivations[..hidden]
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }
}

/// Parameter and input gradients of one backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
    adam: AdamState,
}

impl Mlp {
    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn new(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut params = Vec::with_capacity(spec.param_count());
        for (fan_in, fan_out) in spec.layer_dims() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out + fan_out {
                params.push(rng.random_range(-bound..=bound));
            }
        }
        Self::from_params(spec, params)
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        let n = spec.param_count();
        Self::from_params(spec, vec![0.0; n])
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        check_len("parameter vector", spec.param_count(), params.len())?;
        let adam = AdamState::zeros(params.len());
        Ok(Mlp { spec, params, adam })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn adam_state(&self) -> &AdamState {
        &self.adam
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("network input", self.spec.input_dim, input.len())?;
        let mut current = input.to_vec();
        let mut offset = 0;
        for (layer, (fan_in, fan_out)) in self.spec.layer_dims().into_iter().enumerate() {
            let act = self.spec.activation(layer);
            let (w, rest) = self.params[offset..].split_at(fan_in * fan_out);
            let b = &rest[..fan_out];
            let mut next = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let z = dot(row, &current) + b[o];
                next.push(act.apply(z));
            }
            offset += fan_in * fan_out + fan_out;
            current = next;
        }
        Ok(current)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        check_len("network input", self.spec.input_dim, input.len())?;
        let layers = self.spec.layer_dims();
        let mut activations = Vec::with_capacity(layers.len() + 1);
        let mut preactivations = Vec::with_capacity(layers.len());
        activations.push(input.to_vec());
        let mut offset = 0;
        for (layer, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let act = self.spec.activation(layer);
            let (w, rest) = self.params[offset..].split_at(fan_in * fan_out);
            let b = &rest[..fan_out];
            let prev = &activations[layer];
            let mut z = Vec::with_capacity(fan_out);
            let mut a = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let zo = dot(&w[o * fan_in..(o + 1) * fan_in], prev) + b[o];
                z.push(zo);
                a.push(act.apply(zo));
            }
            offset += fan_in * fan_out + fan_out;
            preactivations.push(z);
            activations.push(a);
        }
        Ok(Trace {
            activations,
            preactivations,
        })
    }

    /// Accumulates dLoss/dparams into `param_grad` and returns dLoss/dinput.
    pub fn backward_into(
        &self,
        trace: &Trace,
        output_grad: &[f64],
        param_grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        check_len("parameter gradient", self.params.len(), param_grad.len())?;
        self.backward_impl(trace, output_grad, Some(param_grad))
    }

    /// dLoss/dinput only; skips the parameter gradient.
    pub fn input_gradient(&self, trace: &Trace, output_grad: &[f64]) -> Result<Vec<f64>> {
        self.backward_impl(trace, output_grad, None)
    }

    fn backward_impl(
        &self,
        trace: &Trace,
        output_grad: &[f64],
        mut param_grad: Option<&mut [f64]>,
    ) -> Result<Vec<f64>> {
        check_len("output gradient", self.spec.output_dim, output_grad.len())?;
        let layers = self.spec.layer_dims();

        let mut offsets = Vec::with_capacity(layers.len());
        let mut offset = 0;
        for &(fan_in, fan_out) in &layers {
            offsets.push(offset);
            offset += fan_in * fan_out + fan_out;
        }

        let mut upstream = output_grad.to_vec();
        for layer in (0..layers.len()).rev() {
            let (fan_in, fan_out) = layers[layer];
            let act = self.spec.activation(layer);
            let z = &trace.preactivations[layer];
            let a = &trace.activations[layer + 1];
            let prev = &trace.activations[layer];
            let delta: Vec<f64> = (0..fan_out)
                .map(|o| upstream[o] * act.derivative(z[o], a[o]))
                .collect();

            let base = offsets[layer];
            let w = &self.params[base..base + fan_in * fan_out];
            if let Some(grad) = param_grad.as_deref_mut() {
                let (gw, gb) = grad[base..base + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for o in 0..fan_out {
                    let d = delta[o];
                    gb[o] += d;
                    if d == 0.0 {
                        continue;
                    }
                    for (g, p) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(prev) {
                        *g += d * p;
                    }
                }
            }
            let mut down = vec![0.0; fan_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (x, wv) in down.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *x += d * wv;
                }
            }
            upstream = down;
        }
        Ok(upstream)
    }

    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Gradients> {
        let trace = self.forward_trace(input)?;
        let mut params = vec![0.0; self.params.len()];
        let input = self.backward_into(&trace, output_grad, &mut params)?;
        Ok(Gradients { params, input })
    }

    /// One bias-corrected Adam step (descent on `grad`).
    pub fn adam_step(&mut self, grad: &[f64], cfg: &AdamConfig) -> Result<()> {
        check_len("gradient", self.params.len(), grad.len())?;
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (((p, m), v), &g) in self
            .params
            .iter_mut()
            .zip(self.adam.m.iter_mut())
            .zip(self.adam.v.iter_mut())
            .zip(grad)
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        Ok(())
    }

    /// `self <- tau * source + (1 - tau) * self`, parameter-wise.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        if self.spec != source.spec {
            return Err(AcerError::Domain(
                "soft update between networks of different shape".into(),
            ));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(AcerError::Domain(format!("tau {tau} outside [0, 1]")));
        }
        for (t, &s) in self.params.iter_mut().zip(&source.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
        Ok(())
    }

    /// Copy of the network with a fresh optimizer state.
    pub fn without_optimizer_state(&self) -> Mlp {
        Mlp {
            spec: self.spec.clone(),
            params: self.params.clone(),
            adam: AdamState::zeros(0),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MLP_MAGIC)?;
        w.write_all(&MLP_FORMAT_VERSION.to_le_bytes())?;
        let s = &self.spec;
        write_u64(w, s.input_dim as u64)?;
        write_u64(w, s.hidden_dims.len() as u64)?;
        for &h in &s.hidden_dims {
            write_u64(w, h as u64)?;
        }
        write_u64(w, s.output_dim as u64)?;
        let hidden = match s.hidden_activation {
            HiddenActivation::Relu => 0u8,
            HiddenActivation::Tanh => 1u8,
        };
        let output = match s.output_activation {
            OutputActivation::Identity => 0u8,
            OutputActivation::Tanh => 1u8,
        };
        w.write_all(&[hidden, output])?;
        write_u64(w, self.params.len() as u64)?;
        write_f64s(w, &self.params)?;
        let has_adam = self.adam.m.len() == self.params.len();
        w.write_all(&[has_adam as u8])?;
        if has_adam {
            write_f64s(w, &self.adam.m)?;
            write_f64s(w, &self.adam.v)?;
        }
        write_u64(w, self.adam.step)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Mlp> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MLP_MAGIC {
            return Err(AcerError::Checkpoint("not an MLP record".into()));
        }
        let mut version = [0u8; 4];
        r.read_exact(&mut version)?;
        let version = u32::from_le_bytes(version);
        if version != MLP_FORMAT_VERSION {
            return Err(AcerError::Checkpoint(format!(
                "unsupported MLP format version {version}"
            )));
        }
        let input_dim = read_len(r)?;
        let n_hidden = read_len(r)?;
        if n_hidden > 64 {
            return Err(AcerError::Checkpoint("implausible layer count".into()));
        }
        let hidden_dims = (0..n_hidden).map(|_| read_len(r)).collect::<Result<Vec<_>>>()?;
        let output_dim = read_len(r)?;
        let mut acts = [0u8; 2];
        r.read_exact(&mut acts)?;
        let hidden_activation = match acts[0] {
            0 => HiddenActivation::Relu,
            1 => HiddenActivation::Tanh,
            x => return Err(AcerError::Checkpoint(format!("bad hidden activation {x}"))),
        };
        let output_activation = match acts[1] {
            0 => OutputActivation::Identity,
            1 => OutputActivation::Tanh,
            x => return Err(AcerError::Checkpoint(format!("bad output activation {x}"))),
        };
        let spec = MlpSpec::new(
            input_dim,
            hidden_dims,
            output_dim,
            hidden_activation,
            output_activation,
        )
        .map_err(|e| AcerError::Checkpoint(e.to_string()))?;
        let n = read_len(r)?;
        if n != spec.param_count() {
            return Err(AcerError::Checkpoint(format!(
                "parameter count {n} does not match spec ({})",
                spec.param_count()
            )));
        }
        let params = read_f64s(r, n)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let (m, v) = if flag[0] == 1 {
            (read_f64s(r, n)?, read_f64s(r, n)?)
        } else {
            (Vec::new(), Vec::new())
        };
        let step = read_u64(r)?;
        Ok(Mlp {
            spec,
            params,
            adam: AdamState { m, v, step },
        })
    }
}

const MLP_MAGIC: &[u8; 4] = b"AMLP";
const MLP_FORMAT_VERSION: u32 = 1;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn write_u64<W: Write>(w: &mut W, x: u64) -> Result<()> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    let x = read_u64(r)?;
    if x > (1 << 32) {
        return Err(AcerError::Checkpoint(format!("implausible length {x}")));
    }
    Ok(x as usize)
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    target.soft_update_from(source, tau)
}

/// A scalar loss of the network output, used by [`gradient_check`].
pub trait OutputLoss {
    fn value(&self, output: &[f64]) -> f64;
    fn gradient(&self, output: &[f64]) -> Vec<f64>;
}

/// `0.5 * ||y - target||^2`
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    pub target: Vec<f64>,
}

impl OutputLoss for QuadraticLoss {
    fn value(&self, output: &[f64]) -> f64 {
        0.5 * output
            .iter()
            .zip(&self.target)
            .map(|(y, t)| (y - t) * (y - t))
            .sum::<f64>()
    }

    fn gradient(&self, output: &[f64]) -> Vec<f64> {
        output.iter().zip(&self.target).map(|(y, t)| y - t).collect()
    }
}

pub const FD_STEP: f64 = 1e-5;

/// Central finite differences of `f` around `point`.
pub fn central_difference(point: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(&x);
        x[i] = orig - h;
        let minus = f(&x);
        x[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// `||analytic - numeric||_inf / max(||numeric||_inf, 1e-8)`
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    let scale = numeric.iter().fold(0.0f64, |m, n| m.max(n.abs()));
    diff / scale.max(1e-8)
}

const KINK_MARGIN: f64 = 1e-3;
const MAX_KINK_RESAMPLES: usize = 1000;

/// Maximum relative error between backprop and central differences over
/// `trials` random inputs drawn from `[-1, 1]^input_dim`.
///
/// For relu networks, inputs with any hidden pre-activation within `1e-3` of
/// zero are redrawn so the finite differences never straddle a kink.
pub fn gradient_check(
    net: &Mlp,
    loss: &dyn OutputLoss,
    trials: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if trials == 0 {
        return Err(AcerError::Domain("gradient_check needs trials >= 1".into()));
    }
    let relu = net.spec.hidden_activation == HiddenActivation::Relu;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mut input: Vec<f64>;
        let mut attempts = 0;
        loop {
            input = (0..net.input_dim())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            if !relu || net.forward_trace(&input)?.min_abs_hidden_preactivation() > KINK_MARGIN {
                break;
            }
            attempts += 1;
            if attempts >= MAX_KINK_RESAMPLES {
                return Err(AcerError::Domain(
                    "could not find an input away from relu kinks".into(),
                ));
            }
        }
        let trace = net.forward_trace(&input)?;
        let mut analytic = vec![0.0; net.params.len()];
        net.backward_into(&trace, &loss.gradient(trace.output()), &mut analytic)?;

        let mut probe = net.clone();
        let numeric = central_difference(&net.params, FD_STEP, |p| {
            probe.params.copy_from_slice(p);
            loss.value(&probe.forward(&input).expect("shape checked above"))
        });
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}
