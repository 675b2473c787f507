//! From-scratch network for timing-metric de-noising.
//!
//! The main variant is a single 1-D convolution layer (4 filters, kernel
//! spanning one CP length plus one sample, zero "same" padding) followed
//! by ReLU, an average across the 4 channels at each position, one dense
//! layer, and a sigmoid head. Two reference variants share the training
//! machinery: a plain two-hidden-layer dense network and a conv variant
//! that reads the raw received power sequence instead of the correlation
//! metric.
//!
//! Everything is double precision with hand-written forward and backward
//! passes; [`grad_check`] validates the analytic gradients against central
//! finite differences.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};

/// Number of convolution filters.
pub const FILTERS: usize = 4;

/// Network family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Conv net over the timing metric (length `n_s`).
    Prop,
    /// Two-hidden-layer dense net over the timing metric.
    DnnBaseline,
    /// Conv net over the raw received power sequence (length `n_w`).
    RawSignalProp,
}

/// Layer dimensions for one variant at one system configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkArch {
    pub variant: Variant,
    /// Input vector length: `n_s` for metric inputs, `n_w` for raw input.
    pub input_len: usize,
    /// Convolution kernel length, `n_g + 1` (0 for the dense variant).
    pub kernel_len: usize,
    /// Convolution filter count (0 for the dense variant).
    pub filters: usize,
    /// Output vector length, always `n_s`.
    pub output_len: usize,
}

impl NetworkArch {
    pub fn for_variant(variant: Variant, config: &SystemConfig) -> Self {
        match variant {
            Variant::Prop => Self {
                variant,
                input_len: config.n_s,
                kernel_len: config.n_g + 1,
                filters: FILTERS,
                output_len: config.n_s,
            },
            Variant::DnnBaseline => Self {
                variant,
                input_len: config.n_s,
                kernel_len: 0,
                filters: 0,
                output_len: config.n_s,
            },
            Variant::RawSignalProp => Self {
                variant,
                input_len: config.n_w,
                kernel_len: config.n_g + 1,
                filters: FILTERS,
                output_len: config.n_s,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.variant {
            Variant::Prop | Variant::RawSignalProp => self.kernel_len >= 1 && self.filters >= 1,
            Variant::DnnBaseline => self.kernel_len == 0 && self.filters == 0,
        } && self.input_len >= 1
            && self.output_len >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("inconsistent architecture: {self:?}")))
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Parameters of the conv variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayers {
    /// `[filters][kernel_len]`
    pub conv_w: Vec<Vec<f64>>,
    pub conv_b: Vec<f64>,
    /// `[output_len x input_len]`
    pub dense_w: Mat,
    pub dense_b: Vec<f64>,
}

/// Parameters of the dense baseline: two ReLU hidden layers of width
/// `output_len` and a sigmoid output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayers {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub w3: Mat,
    pub b3: Vec<f64>,
}

/// Trainable parameters for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerParams {
    Conv(ConvLayers),
    Dense(DenseLayers),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub arch: NetworkArch,
    pub layers: LayerParams,
}

/// Gradients with the same shapes as the parameters they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: LayerParams,
}

impl LayerParams {
    fn zeros_like(&self) -> Self {
        match self {
            LayerParams::Conv(c) => LayerParams::Conv(ConvLayers {
                conv_w: vec![vec![0.0; c.conv_w[0].len()]; c.conv_w.len()],
                conv_b: vec![0.0; c.conv_b.len()],
                dense_w: Mat::zeros(c.dense_w.rows, c.dense_w.cols),
                dense_b: vec![0.0; c.dense_b.len()],
            }),
            LayerParams::Dense(d) => LayerParams::Dense(DenseLayers {
                w1: Mat::zeros(d.w1.rows, d.w1.cols),
                b1: vec![0.0; d.b1.len()],
                w2: Mat::zeros(d.w2.rows, d.w2.cols),
                b2: vec![0.0; d.b2.len()],
                w3: Mat::zeros(d.w3.rows, d.w3.cols),
                b3: vec![0.0; d.b3.len()],
            }),
        }
    }

    /// Flat slice views in a fixed order: conv weights per filter, conv
    /// biases, dense weights, dense biases (or w1, b1, w2, b2, w3, b3).
    fn flat(&self) -> Vec<&[f64]> {
        match self {
            LayerParams::Conv(c) => {
                let mut v: Vec<&[f64]> = c.conv_w.iter().map(|w| w.as_slice()).collect();
                v.push(&c.conv_b);
                v.push(&c.dense_w.data);
                v.push(&c.dense_b);
                v
            }
            LayerParams::Dense(d) => {
                vec![&d.w1.data, &d.b1, &d.w2.data, &d.b2, &d.w3.data, &d.b3]
            }
        }
    }

    fn flat_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            LayerParams::Conv(c) => {
                let mut v: Vec<&mut [f64]> =
                    c.conv_w.iter_mut().map(|w| w.as_mut_slice()).collect();
                v.push(&mut c.conv_b);
                v.push(&mut c.dense_w.data);
                v.push(&mut c.dense_b);
                v
            }
            LayerParams::Dense(d) => vec![
                &mut d.w1.data,
                &mut d.b1,
                &mut d.w2.data,
                &mut d.b2,
                &mut d.w3.data,
                &mut d.b3,
            ],
        }
    }

    pub fn param_count(&self) -> usize {
        self.flat().iter().map(|s| s.len()).sum()
    }

    pub fn get_param(&self, mut idx: usize) -> f64 {
        for s in self.flat() {
            if idx < s.len() {
                return s[idx];
            }
            idx -= s.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for s in self.flat_mut() {
            if idx < s.len() {
                s[idx] = value;
                return;
            }
            idx -= s.len();
        }
        panic!("parameter index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.flat().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self { layers: params.layers.zeros_like() }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        let mut mine = self.layers.flat_mut();
        let theirs = other.layers.flat();
        for (a, b) in mine.iter_mut().zip(theirs) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.all_finite()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intermediate values needed for the exact backward pass. The cache is
/// only valid for the parameters that produced it.
#[derive(Debug, Clone)]
pub enum ForwardCache {
    Conv {
        input: Vec<f64>,
        /// Pre-ReLU conv outputs, `[filters][input_len]`.
        z1: Vec<Vec<f64>>,
        /// Channel-averaged post-ReLU activations, `[input_len]`.
        pooled: Vec<f64>,
        output: Vec<f64>,
    },
    Dense {
        input: Vec<f64>,
        z1: Vec<f64>,
        a1: Vec<f64>,
        z2: Vec<f64>,
        a2: Vec<f64>,
        output: Vec<f64>,
    },
}

/// Glorot-uniform weights (half-width `sqrt(6 / (fan_in + fan_out))`),
/// zero biases; deterministic per seed.
pub fn init_network(arch: &NetworkArch, seed: u64) -> Result<NetworkParams> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |fan_in: usize, fan_out: usize, len: usize, rng: &mut ChaCha8Rng| {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..len).map(|_| rng.random_range(-a..a)).collect::<Vec<f64>>()
    };
    let layers = match arch.variant {
        Variant::Prop | Variant::RawSignalProp => {
            let k = arch.kernel_len;
            let conv_w: Vec<Vec<f64>> = (0..arch.filters)
                .map(|_| uniform(k, k * arch.filters, k, &mut rng))
                .collect();
            let dense_w = Mat {
                rows: arch.output_len,
                cols: arch.input_len,
                data: uniform(
                    arch.input_len,
                    arch.output_len,
                    arch.output_len * arch.input_len,
                    &mut rng,
                ),
            };
            LayerParams::Conv(ConvLayers {
                conv_w,
                conv_b: vec![0.0; arch.filters],
                dense_w,
                dense_b: vec![0.0; arch.output_len],
            })
        }
        Variant::DnnBaseline => {
            let hidden = arch.output_len;
            let w1 = Mat {
                rows: hidden,
                cols: arch.input_len,
                data: uniform(arch.input_len, hidden, hidden * arch.input_len, &mut rng),
            };
            let w2 = Mat {
                rows: hidden,
                cols: hidden,
                data: uniform(hidden, hidden, hidden * hidden, &mut rng),
            };
            let w3 = Mat {
                rows: arch.output_len,
                cols: hidden,
                data: uniform(hidden, arch.output_len, arch.output_len * hidden, &mut rng),
            };
            LayerParams::Dense(DenseLayers {
                w1,
                b1: vec![0.0; hidden],
                w2,
                b2: vec![0.0; hidden],
                w3,
                b3: vec![0.0; arch.output_len],
            })
        }
    };
    Ok(NetworkParams { arch: arch.clone(), layers })
}

/// Same-length 1-D convolution with zero padding; the kernel center sits
/// at index `(kernel_len - 1) / 2`, so a discrete delta kernel reproduces
/// the input.
fn conv1d_same(input: &[f64], kernel: &[f64], bias: f64, out: &mut [f64]) {
    let len = input.len() as isize;
    let k = kernel.len() as isize;
    let pad_left = (k - 1) / 2;
    for (i, o) in out.iter_mut().enumerate() {
        let base = i as isize - pad_left;
        let j_lo = (-base).max(0);
        let j_hi = k.min(len - base);
        let mut acc = bias;
        let xs = &input[(base + j_lo) as usize..(base + j_hi) as usize];
        for (w, x) in kernel[j_lo as usize..j_hi as usize].iter().zip(xs) {
            acc += w * x;
        }
        *o = acc;
    }
}

fn dense_affine(w: &Mat, b: &[f64], x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let dot: f64 = w.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        *o = b[r] + dot;
    }
}

/// Run the network; returns the output (each entry strictly inside (0,1))
/// and the cache consumed by [`backward`].
pub fn forward(params: &NetworkParams, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    if input.len() != params.arch.input_len {
        return Err(Error::Shape(format!(
            "input length {} does not match arch input_len {}",
            input.len(),
            params.arch.input_len
        )));
    }
    match &params.layers {
        LayerParams::Conv(c) => {
            let len = input.len();
            let mut z1 = vec![vec![0.0; len]; c.conv_w.len()];
            for (ch, z) in z1.iter_mut().enumerate() {
                conv1d_same(input, &c.conv_w[ch], c.conv_b[ch], z);
            }
            let inv_f = 1.0 / c.conv_w.len() as f64;
            let mut pooled = vec![0.0; len];
            for z in &z1 {
                for (p, &v) in pooled.iter_mut().zip(z) {
                    *p += v.max(0.0);
                }
            }
            for p in &mut pooled {
                *p *= inv_f;
            }
            let mut output = vec![0.0; params.arch.output_len];
            dense_affine(&c.dense_w, &c.dense_b, &pooled, &mut output);
            for o in &mut output {
                *o = sigmoid(*o);
            }
            let cache = ForwardCache::Conv {
                input: input.to_vec(),
                z1,
                pooled,
                output: output.clone(),
            };
            Ok((output, cache))
        }
        LayerParams::Dense(d) => {
            let mut z1 = vec![0.0; d.w1.rows];
            dense_affine(&d.w1, &d.b1, input, &mut z1);
            let a1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
            let mut z2 = vec![0.0; d.w2.rows];
            dense_affine(&d.w2, &d.b2, &a1, &mut z2);
            let a2: Vec<f64> = z2.iter().map(|&v| v.max(0.0)).collect();
            let mut output = vec![0.0; d.w3.rows];
            dense_affine(&d.w3, &d.b3, &a2, &mut output);
            for o in &mut output {
                *o = sigmoid(*o);
            }
            let cache = ForwardCache::Dense {
                input: input.to_vec(),
                z1,
                a1,
                z2,
                a2,
                output: output.clone(),
            };
            Ok((output, cache))
        }
    }
}

/// Sum of squared errors between the output and its target.
pub fn mse_loss(output: &[f64], target: &[f64]) -> Result<f64> {
    if output.len() != target.len() {
        return Err(Error::Shape(format!(
            "output length {} vs target length {}",
            output.len(),
            target.len()
        )));
    }
    Ok(output.iter().zip(target).map(|(o, t)| (t - o) * (t - o)).sum())
}

/// Backprop through the sigmoid head and (for dense outputs into ReLU
/// layers) one hidden layer: given `d loss / d activation` and the
/// pre-activations, produce the bias/weight gradients and the gradient
/// with respect to the layer input.
fn dense_backward(
    w: &Mat,
    x: &[f64],
    delta: &[f64],
    g_w: &mut Mat,
    g_b: &mut [f64],
    d_x: &mut [f64],
) {
    for (r, &dr) in delta.iter().enumerate() {
        g_b[r] = dr;
        let w_row = w.row(r);
        let g_row = g_w.row_mut(r);
        for i in 0..x.len() {
            g_row[i] = dr * x[i];
            d_x[i] += dr * w_row[i];
        }
    }
}

/// Exact gradients of [`mse_loss`] with respect to every parameter, given
/// the cache produced by [`forward`] on the same parameters.
pub fn backward(params: &NetworkParams, cache: &ForwardCache, target: &[f64]) -> Result<Gradients> {
    if target.len() != params.arch.output_len {
        return Err(Error::Shape(format!(
            "target length {} does not match output_len {}",
            target.len(),
            params.arch.output_len
        )));
    }
    let mut grads = Gradients::zeros_like(params);
    match (&params.layers, cache, &mut grads.layers) {
        (
            LayerParams::Conv(c),
            ForwardCache::Conv { input, z1, pooled, output },
            LayerParams::Conv(g),
        ) => {
            let delta_out: Vec<f64> = output
                .iter()
                .zip(target)
                .map(|(&o, &t)| 2.0 * (o - t) * o * (1.0 - o))
                .collect();
            let mut d_pooled = vec![0.0; pooled.len()];
            dense_backward(
                &c.dense_w,
                pooled,
                &delta_out,
                &mut g.dense_w,
                &mut g.dense_b,
                &mut d_pooled,
            );
            let inv_f = 1.0 / c.conv_w.len() as f64;
            let k = c.conv_w[0].len() as isize;
            let pad_left = (k - 1) / 2;
            let len = input.len() as isize;
            for (ch, z) in z1.iter().enumerate() {
                let g_w = &mut g.conv_w[ch];
                let mut g_b = 0.0;
                for (i, &zv) in z.iter().enumerate() {
                    if zv > 0.0 {
                        let dz = d_pooled[i] * inv_f;
                        g_b += dz;
                        let base = i as isize - pad_left;
                        let j_lo = (-base).max(0);
                        let j_hi = k.min(len - base);
                        let xs = &input[(base + j_lo) as usize..(base + j_hi) as usize];
                        for (gw, &x) in g_w[j_lo as usize..j_hi as usize].iter_mut().zip(xs) {
                            *gw += dz * x;
                        }
                    }
                }
                g.conv_b[ch] = g_b;
            }
        }
        (
            LayerParams::Dense(d),
            ForwardCache::Dense { input, z1, a1, z2, a2, output },
            LayerParams::Dense(g),
        ) => {
            let delta3: Vec<f64> = output
                .iter()
                .zip(target)
                .map(|(&o, &t)| 2.0 * (o - t) * o * (1.0 - o))
                .collect();
            let mut d_a2 = vec![0.0; a2.len()];
            dense_backward(&d.w3, a2, &delta3, &mut g.w3, &mut g.b3, &mut d_a2);
            let delta2: Vec<f64> = d_a2
                .iter()
                .zip(z2)
                .map(|(&da, &z)| if z > 0.0 { da } else { 0.0 })
                .collect();
            let mut d_a1 = vec![0.0; a1.len()];
            dense_backward(&d.w2, a1, &delta2, &mut g.w2, &mut g.b2, &mut d_a1);
            let delta1: Vec<f64> = d_a1
                .iter()
                .zip(z1)
                .map(|(&da, &z)| if z > 0.0 { da } else { 0.0 })
                .collect();
            let mut d_in = vec![0.0; input.len()];
            dense_backward(&d.w1, input, &delta1, &mut g.w1, &mut g.b1, &mut d_in);
        }
        _ => {
            return Err(Error::Shape(
                "forward cache does not match the parameter family".into(),
            ))
        }
    }
    Ok(grads)
}

/// One SGD update: `p <- p - alpha * g / batch_size` for every parameter,
/// where `grads` holds gradients accumulated (summed) over the batch.
pub fn sgd_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    alpha: f64,
    batch_size: usize,
) -> Result<()> {
    if !(alpha > 0.0) || batch_size == 0 {
        return Err(Error::Domain(format!(
            "alpha must be > 0 and batch_size >= 1, got {alpha} / {batch_size}"
        )));
    }
    if !grads.all_finite() {
        return Err(Error::Training("non-finite gradient in SGD update".into()));
    }
    let scale = alpha / batch_size as f64;
    let mut ps = params.layers.flat_mut();
    let gs = grads.layers.flat();
    for (p, g) in ps.iter_mut().zip(gs) {
        for (x, &y) in p.iter_mut().zip(g) {
            *x -= scale * y;
        }
    }
    Ok(())
}

/// Largest relative disagreement between the analytic gradients and
/// central finite differences of the loss, over every parameter.
pub fn max_fd_rel_error(
    params: &NetworkParams,
    input: &[f64],
    target: &[f64],
    grads: &Gradients,
) -> Result<f64> {
    const STEP: f64 = 1e-5;
    let mut probe = params.clone();
    let count = probe.layers.param_count();
    let mut worst = 0.0f64;
    for idx in 0..count {
        let orig = probe.layers.get_param(idx);
        probe.layers.set_param(idx, orig + STEP);
        let (out_p, _) = forward(&probe, input)?;
        let loss_p = mse_loss(&out_p, target)?;
        probe.layers.set_param(idx, orig - STEP);
        let (out_m, _) = forward(&probe, input)?;
        let loss_m = mse_loss(&out_m, target)?;
        probe.layers.set_param(idx, orig);
        let numeric = (loss_p - loss_m) / (2.0 * STEP);
        let analytic = grads.layers.get_param(idx);
        let denom = numeric.abs().max(analytic.abs());
        if denom >= 1e-7 {
            worst = worst.max((numeric - analytic).abs() / denom);
        }
    }
    Ok(worst)
}

/// Outcome of one gradient-checking run.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub variant: Variant,
    pub trials: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compare analytic and finite-difference gradients on `trials` random
/// parameter/input/target draws; passes when the worst relative error
/// stays below 1e-4.
pub fn grad_check(arch: &NetworkArch, seed: u64, trials: usize) -> Result<GradCheckReport> {
    if trials == 0 {
        return Err(Error::Domain("trials must be >= 1".into()));
    }
    let mut worst = 0.0f64;
    for t in 0..trials {
        let params = init_network(arch, crate::seeds::derive_seed(seed, &[t as u64]))?;
        let mut rng = crate::seeds::stream_rng(seed, &[t as u64, 1]);
        let input: Vec<f64> = (0..arch.input_len).map(|_| rng.random_range(0.0..1.0)).collect();
        let target: Vec<f64> = (0..arch.output_len)
            .map(|_| if rng.random_range(0.0..1.0) < 0.5 { 0.0 } else { 1.0 })
            .collect();
        let (_, cache) = forward(&params, &input)?;
        let grads = backward(&params, &cache, &target)?;
        worst = worst.max(max_fd_rel_error(&params, &input, &target, &grads)?);
    }
    let tolerance = 1e-4;
    Ok(GradCheckReport {
        variant: arch.variant,
        trials,
        max_rel_error: worst,
        tolerance,
        pass: worst < tolerance,
    })
}
