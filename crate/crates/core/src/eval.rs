//! Monte-Carlo evaluation of timing-error probability.
//!
//! A trial is one simulated reception: draw a timing offset, a fading
//! realization, and noise; compute the timing metric; let every method
//! estimate the DFT-window start from the same observation; score each
//! estimate against the ISI-free region of the true channel. Trial
//! randomness derives from `(master_seed, snr_index, trial_index)` only,
//! so methods are compared on identical channels (paired), adding a
//! method never changes another method's counts, and error counts are
//! identical for any worker count.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    exponential_pdp, propagate, sample_channel, tdl_profile, ObservationParams, PdpProfile,
};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::frame::{assemble_frame, generate_training_symbol, TrainingSymbol};
use crate::metric::{
    argmax_first, classic_estimate, compute_metric, raw_power_input, TimingMetricVec,
};
use crate::nn::{forward, NetworkArch, Variant};
use crate::seeds::stream_rng;
use crate::train::{ModelCheckpoint, DEFAULT_SEQ_ID};

/// Synchronizers under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Conv net on the metric, trained with randomized `tau_hat`.
    Prop,
    /// Conv net on the metric, trained with one fixed `tau_hat`.
    PropFixedTau,
    /// Conv net on the raw received power sequence.
    PropRawSignal,
    /// Dense baseline on the metric.
    Dnn,
    /// Argmax of the correlation metric, no learning.
    ClassicArgmax,
}

impl Method {
    pub fn csv_name(&self) -> &'static str {
        match self {
            Method::Prop => "prop",
            Method::PropFixedTau => "prop_fixed_tau",
            Method::PropRawSignal => "prop_raw_signal",
            Method::Dnn => "dnn",
            Method::ClassicArgmax => "classic_argmax",
        }
    }

    /// Network family this method must be backed by, if any.
    pub fn expected_variant(&self) -> Option<Variant> {
        match self {
            Method::Prop | Method::PropFixedTau => Some(Variant::Prop),
            Method::PropRawSignal => Some(Variant::RawSignalProp),
            Method::Dnn => Some(Variant::DnnBaseline),
            Method::ClassicArgmax => None,
        }
    }
}

/// Declarative channel selection for evaluation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSpec {
    /// Exponential profile with `l` taps and decay `eta`.
    Exponential { l: usize, eta: f64 },
    /// 38.901 TDL profile; `delay_spread` in seconds.
    Tdl { name: String, delay_spread: f64 },
}

impl ChannelSpec {
    pub fn resolve(&self, sys: &SystemConfig) -> Result<PdpProfile> {
        match self {
            ChannelSpec::Exponential { l, eta } => exponential_pdp(*l, *eta, sys.n_g),
            ChannelSpec::Tdl { name, delay_spread } => {
                tdl_profile(name, *delay_spread, sys.sample_period, sys.n_g)
            }
        }
    }
}

/// One Monte-Carlo sweep: every method at every SNR point over one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(with = "crate::numfmt::vec")]
    pub snr_points_db: Vec<f64>,
    pub channel: ChannelSpec,
    pub trials_per_point: usize,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_seq_id")]
    pub seq_id: u32,
}

fn default_seq_id() -> u32 {
    DEFAULT_SEQ_ID
}

/// Error counts for one `(method, channel, snr)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub method: Method,
    pub channel: String,
    #[serde(with = "crate::numfmt::single")]
    pub snr_db: f64,
    pub trials: usize,
    pub errors: usize,
}

impl EvalCell {
    pub fn error_prob(&self) -> f64 {
        self.errors as f64 / self.trials as f64
    }

    /// Normal-approximation 95% confidence half-width.
    pub fn ci95(&self) -> f64 {
        let p = self.error_prob();
        1.96 * (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Cells ordered by (snr point, method) as listed in the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub cells: Vec<EvalCell>,
}

impl EvalResult {
    pub fn cell(&self, method: Method, snr_db: f64) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.method == method && c.snr_db == snr_db)
    }

    /// Render as CSV with fixed number formatting, byte-stable across
    /// runs and worker counts.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,channel,snr_db,trials,errors,error_prob,ci95\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{:.6}\n",
                c.method.csv_name(),
                c.channel,
                c.snr_db,
                c.trials,
                c.errors,
                c.error_prob(),
                c.ci95()
            ));
        }
        out
    }
}

/// Estimated DFT-window start: earliest argmax of the network output.
pub fn estimate_offset(output: &[f64]) -> usize {
    argmax_first(output)
}

/// True when the estimate lands inside the ISI-free region
/// `{theta + tau_true + 1, ..., theta + n_g}` of the true channel.
pub fn is_correct(theta_hat: usize, theta: usize, tau_true: usize, config: &SystemConfig) -> bool {
    theta_hat >= theta + tau_true + 1 && theta_hat <= theta + config.n_g
}

/// Everything one trial exposes to the estimators.
struct TrialData {
    theta: usize,
    tau_true: usize,
    metric: TimingMetricVec,
    /// Max-normalized metric, the network input.
    metric_norm: Vec<f64>,
    /// Max-normalized `|y|^2`, present when a raw-signal method runs.
    raw_power: Option<Vec<f64>>,
}

fn run_trial(
    sys: &SystemConfig,
    symbol: &TrainingSymbol,
    profile: &PdpProfile,
    snr_db: f64,
    epsilon: f64,
    master_seed: u64,
    snr_idx: usize,
    trial_idx: usize,
    need_raw: bool,
) -> Result<TrialData> {
    let mut rng = stream_rng(master_seed, &[snr_idx as u64, trial_idx as u64]);
    let theta = rng.random_range(0..sys.n);
    let frame = assemble_frame(symbol, theta, sys, &mut rng)?;
    let channel = sample_channel(profile, &mut rng);
    let params = ObservationParams::new(theta, epsilon, snr_db, sys)?;
    let obs = propagate(&frame, &channel, &params, sys, &mut rng)?;
    let metric = compute_metric(&obs, symbol, false)?;
    let mut norm = metric.clone();
    norm.normalize();
    let raw_power = need_raw.then(|| raw_power_input(&obs.y));
    Ok(TrialData {
        theta,
        tau_true: profile.max_delay(),
        metric,
        metric_norm: norm.m,
        raw_power,
    })
}

type Estimator<'a> = Box<dyn Fn(&TrialData) -> Result<usize> + Sync + 'a>;

/// Core engine: per SNR point, run every trial once and count, for each
/// estimator, how often its estimate leaves the ISI-free region.
fn run_with_estimators(
    ecfg: &EvalConfig,
    sys: &SystemConfig,
    labels: &[&'static str],
    estimators: &[Estimator<'_>],
    need_raw: bool,
) -> Result<Vec<Vec<usize>>> {
    let symbol = generate_training_symbol(sys, ecfg.seq_id)?;
    let profile = ecfg.channel.resolve(sys)?;
    let mut counts = vec![vec![0usize; labels.len()]; ecfg.snr_points_db.len()];
    for (snr_idx, &snr_db) in ecfg.snr_points_db.iter().enumerate() {
        let per_method: Vec<usize> = (0..ecfg.trials_per_point)
            .into_par_iter()
            .map(|trial_idx| -> Result<Vec<usize>> {
                let trial = run_trial(
                    sys,
                    &symbol,
                    &profile,
                    snr_db,
                    ecfg.epsilon,
                    ecfg.master_seed,
                    snr_idx,
                    trial_idx,
                    need_raw,
                )?;
                let mut errs = vec![0usize; estimators.len()];
                for (e, est) in estimators.iter().enumerate() {
                    let theta_hat = est(&trial)?;
                    if !is_correct(theta_hat, trial.theta, trial.tau_true, sys) {
                        errs[e] = 1;
                    }
                }
                Ok(errs)
            })
            .try_reduce(
                || vec![0usize; estimators.len()],
                |mut acc, errs| {
                    for (a, e) in acc.iter_mut().zip(&errs) {
                        *a += e;
                    }
                    Ok(acc)
                },
            )?;
        counts[snr_idx] = per_method;
    }
    Ok(counts)
}

/// Run the configured sweep with trained models backing the learned
/// methods. Checkpoints are gated on the system digest and on exact
/// architecture agreement.
pub fn run_monte_carlo(
    ecfg: &EvalConfig,
    models: &BTreeMap<Method, ModelCheckpoint>,
    sys: &SystemConfig,
) -> Result<EvalResult> {
    if ecfg.trials_per_point == 0 || ecfg.snr_points_db.is_empty() || ecfg.methods.is_empty() {
        return Err(Error::Config(
            "evaluation needs >= 1 trial, >= 1 SNR point, and >= 1 method".into(),
        ));
    }
    let digest = sys.digest();
    for method in &ecfg.methods {
        let Some(variant) = method.expected_variant() else { continue };
        let ckpt = models.get(method).ok_or_else(|| {
            Error::Config(format!("method {:?} has no checkpoint", method))
        })?;
        if ckpt.sys_digest != digest {
            return Err(Error::Format(format!(
                "checkpoint for {:?} was trained for system digest {} (this run: {digest})",
                method, ckpt.sys_digest
            )));
        }
        let want = NetworkArch::for_variant(variant, sys);
        if ckpt.params.arch != want {
            return Err(Error::Format(format!(
                "checkpoint for {:?} has architecture {:?}, expected {:?}",
                method, ckpt.params.arch, want
            )));
        }
    }

    let labels: Vec<&'static str> = ecfg.methods.iter().map(|m| m.csv_name()).collect();
    let estimators: Vec<Estimator<'_>> = ecfg
        .methods
        .iter()
        .map(|method| -> Estimator<'_> {
            match method {
                Method::ClassicArgmax => {
                    Box::new(|t: &TrialData| Ok(classic_estimate(&t.metric)))
                }
                Method::PropRawSignal => {
                    let params = &models[method].params;
                    Box::new(move |t: &TrialData| {
                        let input = t.raw_power.as_ref().expect("raw input prepared");
                        let (out, _) = forward(params, input)?;
                        Ok(estimate_offset(&out))
                    })
                }
                _ => {
                    let params = &models[method].params;
                    Box::new(move |t: &TrialData| {
                        let (out, _) = forward(params, &t.metric_norm)?;
                        Ok(estimate_offset(&out))
                    })
                }
            }
        })
        .collect();
    let need_raw = ecfg.methods.contains(&Method::PropRawSignal);
    let counts = run_with_estimators(ecfg, sys, &labels, &estimators, need_raw)?;

    let channel_label = ecfg.channel.resolve(sys)?.label();
    let mut cells = Vec::new();
    for (snr_idx, &snr_db) in ecfg.snr_points_db.iter().enumerate() {
        for (m_idx, method) in ecfg.methods.iter().enumerate() {
            cells.push(EvalCell {
                method: *method,
                channel: channel_label.clone(),
                snr_db,
                trials: ecfg.trials_per_point,
                errors: counts[snr_idx][m_idx],
            });
        }
    }
    Ok(EvalResult { cells })
}
