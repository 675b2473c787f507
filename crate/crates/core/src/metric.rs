//! Cross-correlation timing metric and the classic argmax synchronizer.
//!
//! For each candidate offset `d` the metric is the correlation energy
//! between the local replica and the received window starting at `d`,
//! normalized by the window's own energy:
//!
//! ```text
//! m(d) = |sum_k x*(k) y(d+k)|^2 / sum_k |y(d+k)|^2
//! ```
//!
//! The numerator is evaluated with an FFT-based fast correlation; the
//! window energies are summed directly so that an all-zero window yields
//! an exact zero (the metric is defined as 0 there). A literal double-loop
//! evaluation is kept in the tests as the independent oracle.

use num_complex::Complex64;

use crate::channel::{ChannelRealization, Observation};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::fft;
use crate::frame::TrainingSymbol;

/// The timing metric over all `n_s` candidate offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingMetricVec {
    /// Nonnegative metric values, length `n_s`.
    pub m: Vec<f64>,
    /// Whether per-vector max-normalization was applied.
    pub normalized: bool,
}

impl TimingMetricVec {
    /// Divide by the maximum so the peak is 1; a zero vector is left
    /// unchanged. Idempotent.
    pub fn normalize(&mut self) {
        let max = self.max();
        if max > 0.0 {
            for v in &mut self.m {
                *v /= max;
            }
        }
        self.normalized = true;
    }

    pub fn max(&self) -> f64 {
        self.m.iter().cloned().fold(0.0, f64::max)
    }

    /// Smallest index attaining the maximum.
    pub fn argmax(&self) -> usize {
        argmax_first(&self.m)
    }
}

/// Smallest index of the largest value. `values` must be nonempty.
pub fn argmax_first(values: &[f64]) -> usize {
    assert!(!values.is_empty(), "argmax of empty vector");
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Metric over raw sample vectors; `y` has length `n_w`, the replica `x`
/// length `n`, and the result length `n_w - n`.
pub fn metric_from_samples(
    y: &[Complex64],
    x: &[Complex64],
    normalize: bool,
) -> Result<TimingMetricVec> {
    let n = x.len();
    if y.len() <= n {
        return Err(Error::Shape(format!(
            "observation length {} must exceed replica length {n}",
            y.len()
        )));
    }
    let n_s = y.len() - n;

    // fast correlation: c = ifft(fft(y_pad) * conj(fft(x_pad))) / m
    let fft_len = y.len().next_power_of_two();
    let mut y_pad = vec![Complex64::new(0.0, 0.0); fft_len];
    y_pad[..y.len()].copy_from_slice(y);
    let mut x_pad = vec![Complex64::new(0.0, 0.0); fft_len];
    x_pad[..n].copy_from_slice(x);
    fft::forward(&mut y_pad);
    fft::forward(&mut x_pad);
    for (yv, xv) in y_pad.iter_mut().zip(&x_pad) {
        *yv *= xv.conj();
    }
    fft::inverse(&mut y_pad);
    let scale = 1.0 / fft_len as f64;

    let mut m = Vec::with_capacity(n_s);
    for d in 0..n_s {
        let energy: f64 = y[d..d + n].iter().map(|v| v.norm_sqr()).sum();
        if energy == 0.0 {
            m.push(0.0);
        } else {
            let c = y_pad[d] * scale;
            m.push(c.norm_sqr() / energy);
        }
    }
    let mut metric = TimingMetricVec { m, normalized: false };
    if normalize {
        metric.normalize();
    }
    Ok(metric)
}

/// Timing metric of an observation against the local training replica.
pub fn compute_metric(
    obs: &Observation,
    symbol: &TrainingSymbol,
    normalize: bool,
) -> Result<TimingMetricVec> {
    metric_from_samples(&obs.y, &symbol.x, normalize)
}

/// High-SNR closed form of the metric: an impulse of height
/// `rho/(1+rho) * |h_l|^2` at the symbol start plus each tap delay, with
/// `rho` the linear SNR. Impulses falling outside the search range are
/// dropped.
pub fn ideal_metric(
    channel: &ChannelRealization,
    theta: usize,
    snr_db: f64,
    config: &SystemConfig,
) -> TimingMetricVec {
    let rho = 10f64.powf(snr_db / 10.0);
    let factor = if rho.is_infinite() { 1.0 } else { rho / (1.0 + rho) };
    let mut m = vec![0.0; config.n_s];
    let symbol_start = theta + config.n_g;
    for (tap, &delay) in channel.taps.iter().zip(&channel.profile.tap_delays) {
        let pos = symbol_start + delay;
        if pos < config.n_s {
            m[pos] = factor * tap.norm_sqr();
        }
    }
    TimingMetricVec { m, normalized: false }
}

/// Classic synchronizer: the earliest offset attaining the metric peak.
pub fn classic_estimate(metric: &TimingMetricVec) -> usize {
    metric.argmax()
}

/// Max-normalized received power sequence `|y(n)|^2`; the input of the
/// raw-signal network variant, prepared the same way at training and
/// inference time.
pub fn raw_power_input(y: &[Complex64]) -> Vec<f64> {
    let mut p: Vec<f64> = y.iter().map(|v| v.norm_sqr()).collect();
    let max = p.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut p {
            *v /= max;
        }
    }
    p
}
