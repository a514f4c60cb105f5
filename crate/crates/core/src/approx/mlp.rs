use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use super::{ApproxKind, Approximator, Step};
use crate::error::{check_dim, Error, Result};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a` and input `z`.
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

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::Config(format!("unknown activation {s:?} (tanh, relu)"))),
        }
    }
}

/// How the time `t = index / total` is fed to the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeEmbedding {
    /// No time input; the network sees only `x_t` (and `y`).
    None,
    /// Append `t` as one extra input.
    Scalar,
    /// Append `sin(2π k t), cos(2π k t)` for `k = 1..=n`.
    Sinusoidal(usize),
}

/// Written as `none`, `scalar`, or `sin<n>`.
impl fmt::Display for TimeEmbedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeEmbedding::None => f.write_str("none"),
            TimeEmbedding::Scalar => f.write_str("scalar"),
            TimeEmbedding::Sinusoidal(n) => write!(f, "sin{n}"),
        }
    }
}

impl FromStr for TimeEmbedding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TimeEmbedding::None),
            "scalar" => Ok(TimeEmbedding::Scalar),
            _ => s
                .strip_prefix("sin")
                .and_then(|n| n.parse().ok())
                .filter(|&n| n > 0)
                .map(TimeEmbedding::Sinusoidal)
                .ok_or_else(|| {
                    Error::Config(format!("unknown time embedding {s:?} (none, scalar, sin<n>)"))
                }),
        }
    }
}

impl TimeEmbedding {
    pub fn width(self) -> usize {
        match self {
            TimeEmbedding::None => 0,
            TimeEmbedding::Scalar => 1,
            TimeEmbedding::Sinusoidal(n) => 2 * n,
        }
    }

    fn encode(self, t: f64, out: &mut Vec<f64>) {
        match self {
            TimeEmbedding::None => {}
            TimeEmbedding::Scalar => out.push(t),
            TimeEmbedding::Sinusoidal(n) => {
                for k in 1..=n {
                    let w = 2.0 * PI * k as f64 * t;
                    out.push(w.sin());
                    out.push(w.cos());
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    /// Input width first, data dimension last.
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub time_embedding: TimeEmbedding,
    /// Concatenate the conditioning input `y` after `x_t`.
    pub conditional: bool,
    /// Start the output layer at zero, so the initial network output is zero.
    pub zero_final: bool,
    pub init_seed: u64,
}

impl MlpConfig {
    /// Builds the width list around `hidden` for `data_dim`-dimensional data.
    pub fn for_data(
        data_dim: usize,
        hidden: &[usize],
        activation: Activation,
        time_embedding: TimeEmbedding,
        conditional: bool,
    ) -> Self {
        let input = data_dim * if conditional { 2 } else { 1 } + time_embedding.width();
        let mut layer_widths = Vec::with_capacity(hidden.len() + 2);
        layer_widths.push(input);
        layer_widths.extend_from_slice(hidden);
        layer_widths.push(data_dim);
        Self {
            layer_widths,
            activation,
            time_embedding,
            conditional,
            zero_final: false,
            init_seed: 0,
        }
    }

    pub fn zero_final(mut self, yes: bool) -> Self {
        self.zero_final = yes;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self
    }

    pub fn data_dim(&self) -> usize {
        *self.layer_widths.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config("an MLP needs at least two widths".into()));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let d = self.data_dim();
        let expected = d * if self.conditional { 2 } else { 1 } + self.time_embedding.width();
        if self.layer_widths[0] != expected {
            return Err(Error::Config(format!(
                "input width {} does not match data dim {d} + time embedding {}{}",
                self.layer_widths[0],
                self.time_embedding.width(),
                if self.conditional { " + conditioning" } else { "" }
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    /// Offset of the row-major `fan_out × fan_in` weight block; biases follow.
    offset: usize,
}

impl Layer {
    fn bias_offset(&self) -> usize {
        self.offset + self.fan_in * self.fan_out
    }
}

/// Dense feed-forward network with hand-written reverse-mode gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

/// Per-layer pre-activations and outputs from one forward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    /// Freshly initialised network: uniform He fan-in scaling, zero biases.
    pub fn new(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let layers = layout(&config.layer_widths);
        let mut params = vec![0.0; config.param_count()];
        let mut rng = Stream::named(config.init_seed, "init");
        let last = layers.len() - 1;
        for (i, layer) in layers.iter().enumerate() {
            if i == last && config.zero_final {
                continue;
            }
            let bound = (6.0 / layer.fan_in as f64).sqrt();
            for w in &mut params[layer.offset..layer.bias_offset()] {
                *w = bound * (2.0 * rng.uniform() - 1.0);
            }
        }
        Ok(Self {
            config,
            layers,
            params,
        })
    }

    pub fn from_params(config: MlpConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        check_dim("mlp parameters", config.param_count(), params.len())?;
        let layers = layout(&config.layer_widths);
        Ok(Self {
            config,
            layers,
            params,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim("mlp parameters", self.params.len(), params.len())?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Network input `[x_t, y?, time features]`.
    pub fn features(&self, x_t: &[f64], step: Step, y: Option<&[f64]>) -> Result<Vec<f64>> {
        let d = self.config.data_dim();
        check_dim("mlp x_t", d, x_t.len())?;
        let mut input = Vec::with_capacity(self.config.layer_widths[0]);
        input.extend_from_slice(x_t);
        if self.config.conditional {
            let y = y.ok_or_else(|| {
                Error::Config("conditional network evaluated without y".into())
            })?;
            check_dim("mlp y", d, y.len())?;
            input.extend_from_slice(y);
        }
        self.config.time_embedding.encode(step.frac(), &mut input);
        Ok(input)
    }

    pub fn forward(&self, input: &[f64], cache: &mut ForwardCache) -> Result<()> {
        check_dim("mlp input", self.config.layer_widths[0], input.len())?;
        let n = self.layers.len();
        cache.pre.resize_with(n, Vec::new);
        cache.post.resize_with(n, Vec::new);
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = cache.post.split_at_mut(l);
            let a_in: &[f64] = if l == 0 { input } else { &done[l - 1] };
            let z = &mut cache.pre[l];
            z.clear();
            let w = &self.params[layer.offset..layer.bias_offset()];
            let b = &self.params[layer.bias_offset()..layer.bias_offset() + layer.fan_out];
            for (row, &bias) in w.chunks_exact(layer.fan_in).zip(b) {
                z.push(bias + dot(row, a_in));
            }
            let a = &mut rest[0];
            a.clear();
            if l + 1 == n {
                a.extend_from_slice(z);
            } else {
                let act = self.config.activation;
                a.extend(z.iter().map(|&v| act.apply(v)));
            }
        }
        Ok(())
    }

    /// Adds the gradient of `<output, upstream>` with respect to the parameters
    /// into `grad`, using activations from the matching `forward` call.
    pub fn backward(
        &self,
        input: &[f64],
        cache: &ForwardCache,
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        check_dim("mlp upstream", self.config.data_dim(), upstream.len())?;
        check_dim("mlp gradient buffer", self.params.len(), grad.len())?;
        let mut delta = upstream.to_vec();
        let mut next = Vec::new();
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            let a_in: &[f64] = if l == 0 { input } else { &cache.post[l - 1] };
            let (gw, gb) = grad[layer.offset..layer.bias_offset() + layer.fan_out]
                .split_at_mut(layer.fan_in * layer.fan_out);
            for ((row, gbi), &d) in gw.chunks_exact_mut(layer.fan_in).zip(gb.iter_mut()).zip(&delta) {
                *gbi += d;
                if d != 0.0 {
                    for (g, &a) in row.iter_mut().zip(a_in) {
                        *g += d * a;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[layer.offset..layer.bias_offset()];
            next.clear();
            next.resize(layer.fan_in, 0.0);
            for (row, &d) in w.chunks_exact(layer.fan_in).zip(&delta) {
                if d != 0.0 {
                    for (n, &wij) in next.iter_mut().zip(row) {
                        *n += d * wij;
                    }
                }
            }
            let act = self.config.activation;
            for ((n, &z), &a) in next.iter_mut().zip(&cache.pre[l - 1]).zip(&cache.post[l - 1]) {
                *n *= act.derivative(z, a);
            }
            std::mem::swap(&mut delta, &mut next);
        }
        Ok(())
    }

    /// Reverse-mode gradient of `<f(x_t, t, y), upstream>` with respect to the
    /// parameters.
    pub fn gradient(
        &self,
        x_t: &[f64],
        step: Step,
        y: Option<&[f64]>,
        upstream: &[f64],
    ) -> Result<Vec<f64>> {
        let input = self.features(x_t, step, y)?;
        let mut cache = ForwardCache::default();
        self.forward(&input, &mut cache)?;
        let mut grad = vec![0.0; self.params.len()];
        self.backward(&input, &cache, upstream, &mut grad)?;
        Ok(grad)
    }
}

impl Approximator for Mlp {
    fn kind(&self) -> ApproxKind {
        ApproxKind::Mlp
    }

    fn dim(&self) -> usize {
        self.config.data_dim()
    }

    fn evaluate(&self, x_t: &[f64], step: Step, y: Option<&[f64]>) -> Result<Vec<f64>> {
        let input = self.features(x_t, step, y)?;
        let mut cache = ForwardCache::default();
        self.forward(&input, &mut cache)?;
        Ok(cache.post.pop().unwrap_or_default())
    }

    fn params(&self) -> &[f64] {
        &self.params
    }
}

fn layout(widths: &[usize]) -> Vec<Layer> {
    let mut offset = 0;
    widths
        .windows(2)
        .map(|w| {
            let layer = Layer {
                fan_in: w[0],
                fan_out: w[1],
                offset,
            };
            offset += w[0] * w[1] + w[1];
            layer
        })
        .collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent accumulators, combined in a fixed order
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}
