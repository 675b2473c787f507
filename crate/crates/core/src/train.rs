//! Offline dataset generation, the SGD training loop, and persistence.
//!
//! Each dataset sample is a full simulated reception: the label's assumed
//! maximum delay `tau_hat` is drawn first (or fixed), the true channel is
//! an exponential profile whose last tap sits exactly at `tau_hat`, and
//! the input row is the max-normalized timing metric (or raw received
//! power for the raw-signal variant). Labels are therefore correct by
//! construction at training time; delay mismatch is an evaluation-time
//! phenomenon.
//!
//! All per-sample randomness derives from `(master_seed, sample_index)`,
//! and batch gradients are reduced over fixed sub-chunks in index order,
//! so dataset bytes and trained parameters are reproducible for any
//! worker count.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{exponential_pdp, propagate, sample_channel, ObservationParams};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::frame::assemble_frame;
use crate::frame::generate_training_symbol;
use crate::labels::{make_label, sample_tau_hat};
use crate::metric::{compute_metric, raw_power_input};
use crate::nn::{
    backward, forward, init_network, mse_loss, sgd_step, Gradients, NetworkArch, NetworkParams,
    Variant,
};
use crate::seeds::stream_rng;

/// Default Zadoff-Chu root for the training symbol.
pub const DEFAULT_SEQ_ID: u32 = 1;
const DATASET_FORMAT_VERSION: u32 = 1;
const CHECKPOINT_FORMAT_VERSION: u32 = 1;
/// Samples per gradient sub-chunk; fixed so the reduction order (and
/// therefore every bit of the result) is independent of thread count.
const GRAD_CHUNK: usize = 16;

/// How each sample's assumed maximum delay is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Uniform over the upper half of the CP (the hardening scheme).
    RandomTauHat,
    /// One fixed value for every sample (the ablation baseline).
    FixedTauHat(usize),
}

impl Default for LabelMode {
    fn default() -> Self {
        LabelMode::RandomTauHat
    }
}

/// Dataset-generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetGenConfig {
    pub n_samples: usize,
    /// Fraction of samples held out for validation (taken from the end).
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Per-sample SNR drawn uniformly from this interval (dB); `"inf"`
    /// is the noiseless sentinel.
    #[serde(with = "crate::numfmt::pair")]
    pub snr_range_db: (f64, f64),
    /// Per-sample exponential decay drawn uniformly from this interval.
    #[serde(default = "default_eta_range")]
    pub eta_range: (f64, f64),
    /// Timing offsets drawn uniformly from this inclusive interval;
    /// defaults to the full `[0, n-1]` range.
    #[serde(default)]
    pub theta_range: Option<(usize, usize)>,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub label_mode: LabelMode,
    pub master_seed: u64,
    /// Normalized CFO applied to every sample.
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_seq_id")]
    pub seq_id: u32,
}

fn default_val_fraction() -> f64 {
    0.25
}

fn default_eta_range() -> (f64, f64) {
    (0.01, 0.2)
}

fn default_variant() -> Variant {
    Variant::Prop
}

fn default_seq_id() -> u32 {
    DEFAULT_SEQ_ID
}

impl DatasetGenConfig {
    fn validate(&self, sys: &SystemConfig) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.snr_range_db.0 > self.snr_range_db.1 {
            return Err(Error::Config("snr_range_db must be ordered".into()));
        }
        if self.eta_range.0 > self.eta_range.1 || self.eta_range.0 < 0.0 {
            return Err(Error::Config("eta_range must be ordered and nonnegative".into()));
        }
        if let Some((lo, hi)) = self.theta_range {
            if lo > hi || hi > sys.n - 1 {
                return Err(Error::Config(format!(
                    "theta_range must lie inside [0, {}]",
                    sys.n - 1
                )));
            }
        }
        if let LabelMode::FixedTauHat(tau) = self.label_mode {
            if tau > sys.n_g - 1 {
                return Err(Error::Config(format!(
                    "fixed tau_hat {tau} must be < n_g = {}",
                    sys.n_g
                )));
            }
        }
        Ok(())
    }
}

/// Ground truth recorded for every dataset row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub theta: usize,
    /// True maximum channel delay (equals `tau_hat` by construction).
    pub tau_true: usize,
    pub tau_hat: usize,
    pub eta: f64,
    #[serde(with = "crate::numfmt::single")]
    pub snr_db: f64,
    pub seed: u64,
}

/// In-memory dataset; inputs are stored as little-endian f32 rows exactly
/// as they live on disk, so training behaves identically whether the data
/// was just generated or loaded back.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sys: SystemConfig,
    pub gen: DatasetGenConfig,
    pub input_len: usize,
    pub label_len: usize,
    /// Row-major `n_samples x input_len`.
    pub inputs: Vec<f32>,
    /// Row-major `n_samples x label_len`, entries 0/1.
    pub labels: Vec<u8>,
    pub meta: Vec<SampleMeta>,
}

#[derive(Serialize, Deserialize)]
struct DatasetMetaFile {
    format_version: u32,
    sys: SystemConfig,
    sys_digest: String,
    gen: DatasetGenConfig,
    n_samples: usize,
    input_len: usize,
    label_len: usize,
    samples: Vec<SampleMeta>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.meta.len()
    }

    /// Number of leading rows used for training; the rest validate.
    pub fn n_train(&self) -> usize {
        let n_val = (self.n_samples() as f64 * self.gen.val_fraction).round() as usize;
        self.n_samples() - n_val
    }

    pub fn input_row(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.input_len..(i + 1) * self.input_len]
    }

    pub fn label_row(&self, i: usize) -> &[u8] {
        &self.labels[i * self.label_len..(i + 1) * self.label_len]
    }

    /// Write `meta.json`, `inputs.f32` (row-major little-endian f32) and
    /// `labels.u8` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = DatasetMetaFile {
            format_version: DATASET_FORMAT_VERSION,
            sys: self.sys.clone(),
            sys_digest: self.sys.digest(),
            gen: self.gen.clone(),
            n_samples: self.n_samples(),
            input_len: self.input_len,
            label_len: self.label_len,
            samples: self.meta.clone(),
        };
        std::fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
        let mut bytes = Vec::with_capacity(self.inputs.len() * 4);
        for v in &self.inputs {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(dir.join("inputs.f32"), bytes)?;
        std::fs::write(dir.join("labels.u8"), &self.labels)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: DatasetMetaFile =
            serde_json::from_slice(&std::fs::read(dir.join("meta.json"))?)?;
        if meta.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "dataset format version {} unsupported (expected {DATASET_FORMAT_VERSION})",
                meta.format_version
            )));
        }
        if meta.sys_digest != meta.sys.digest() {
            return Err(Error::Format("dataset system digest mismatch".into()));
        }
        let raw = std::fs::read(dir.join("inputs.f32"))?;
        if raw.len() != meta.n_samples * meta.input_len * 4 {
            return Err(Error::Format(format!(
                "inputs.f32 holds {} bytes, expected {}",
                raw.len(),
                meta.n_samples * meta.input_len * 4
            )));
        }
        let inputs: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let labels = std::fs::read(dir.join("labels.u8"))?;
        if labels.len() != meta.n_samples * meta.label_len {
            return Err(Error::Format(format!(
                "labels.u8 holds {} bytes, expected {}",
                labels.len(),
                meta.n_samples * meta.label_len
            )));
        }
        if meta.samples.len() != meta.n_samples {
            return Err(Error::Format("per-sample metadata count mismatch".into()));
        }
        Ok(Self {
            sys: meta.sys,
            gen: meta.gen,
            input_len: meta.input_len,
            label_len: meta.label_len,
            inputs,
            labels,
            meta: meta.samples,
        })
    }
}

fn draw_uniform<R: Rng>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

/// Simulate one labelled sample; every draw comes from `rng` in a fixed
/// order (tau_hat, eta, theta, snr, frame filler, channel, propagation).
fn generate_sample(
    cfg: &DatasetGenConfig,
    sys: &SystemConfig,
    symbol: &crate::frame::TrainingSymbol,
    index: usize,
) -> Result<(Vec<f32>, Vec<u8>, SampleMeta)> {
    let seed = crate::seeds::derive_seed(cfg.master_seed, &[index as u64]);
    let mut rng = stream_rng(cfg.master_seed, &[index as u64]);
    let tau_hat = match cfg.label_mode {
        LabelMode::RandomTauHat => sample_tau_hat(sys, &mut rng),
        LabelMode::FixedTauHat(tau) => tau,
    };
    let eta = draw_uniform(&mut rng, cfg.eta_range);
    let (theta_lo, theta_hi) = cfg.theta_range.unwrap_or((0, sys.n - 1));
    let theta = rng.random_range(theta_lo..=theta_hi);
    let snr_db = draw_uniform(&mut rng, cfg.snr_range_db);

    let frame = assemble_frame(symbol, theta, sys, &mut rng)?;
    let profile = exponential_pdp(tau_hat + 1, eta, sys.n_g)?;
    let channel = sample_channel(&profile, &mut rng);
    let params = ObservationParams::new(theta, cfg.epsilon, snr_db, sys)?;
    let obs = propagate(&frame, &channel, &params, sys, &mut rng)?;

    let input: Vec<f64> = match cfg.variant {
        Variant::Prop | Variant::DnnBaseline => compute_metric(&obs, symbol, true)?.m,
        Variant::RawSignalProp => raw_power_input(&obs.y),
    };
    let label = make_label(theta, tau_hat, sys)?;
    let meta = SampleMeta { theta, tau_true: tau_hat, tau_hat, eta, snr_db, seed };
    Ok((input.iter().map(|&v| v as f32).collect(), label.gamma, meta))
}

/// Generate the full dataset in parallel with per-sample seed streams;
/// output ordering is by sample index regardless of worker count.
pub fn generate_dataset(cfg: &DatasetGenConfig, sys: &SystemConfig) -> Result<Dataset> {
    cfg.validate(sys)?;
    let symbol = generate_training_symbol(sys, cfg.seq_id)?;
    let input_len = NetworkArch::for_variant(cfg.variant, sys).input_len;
    let rows: Vec<(Vec<f32>, Vec<u8>, SampleMeta)> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| generate_sample(cfg, sys, &symbol, i))
        .collect::<Result<_>>()?;
    let mut inputs = Vec::with_capacity(cfg.n_samples * input_len);
    let mut labels = Vec::with_capacity(cfg.n_samples * sys.n_s);
    let mut meta = Vec::with_capacity(cfg.n_samples);
    for (input, label, m) in rows {
        inputs.extend_from_slice(&input);
        labels.extend_from_slice(&label);
        meta.push(m);
    }
    Ok(Dataset {
        sys: sys.clone(),
        gen: cfg.clone(),
        input_len,
        label_len: sys.n_s,
        inputs,
        labels,
        meta,
    })
}

/// SGD hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Upper bound on SGD steps across all epochs.
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Epochs without validation improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    pub seed: u64,
}

fn default_alpha() -> f64 {
    0.002
}

fn default_batch_size() -> usize {
    128
}

fn default_max_steps() -> usize {
    6000
}

fn default_patience() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch's updates.
    pub train_mse: f64,
    /// Mean per-sample loss over the validation split.
    pub val_mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    EarlyStopped,
}

/// Training trace; everything except `wall_time_s` is deterministic for a
/// fixed configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stop_reason: StopReason,
    pub wall_time_s: f64,
}

fn row_target(ds: &Dataset, row: usize) -> Vec<f64> {
    ds.label_row(row).iter().map(|&v| v as f64).collect()
}

fn row_input(ds: &Dataset, row: usize) -> Vec<f64> {
    ds.input_row(row).iter().map(|&v| v as f64).collect()
}

/// Summed gradients and loss over one batch of rows. Work is split over
/// fixed-size sub-chunks evaluated in parallel, then folded in order.
fn batch_gradients(
    params: &NetworkParams,
    ds: &Dataset,
    rows: &[usize],
) -> Result<(Gradients, f64)> {
    let parts: Vec<(Gradients, f64)> = rows
        .par_chunks(GRAD_CHUNK)
        .map(|sub| -> Result<(Gradients, f64)> {
            let mut g = Gradients::zeros_like(params);
            let mut loss = 0.0;
            for &row in sub {
                let input = row_input(ds, row);
                let target = row_target(ds, row);
                let (out, cache) = forward(params, &input)?;
                loss += mse_loss(&out, &target)?;
                g.add_assign(&backward(params, &cache, &target)?);
            }
            Ok((g, loss))
        })
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let (mut total, mut loss) = iter.next().expect("non-empty batch");
    for (g, l) in iter {
        total.add_assign(&g);
        loss += l;
    }
    Ok((total, loss))
}

fn mean_loss(params: &NetworkParams, ds: &Dataset, rows: std::ops::Range<usize>) -> Result<f64> {
    let count = rows.len();
    let losses: Vec<f64> = rows
        .into_par_iter()
        .map(|row| -> Result<f64> {
            let (out, _) = forward(params, &row_input(ds, row))?;
            mse_loss(&out, &row_target(ds, row))
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / count as f64)
}

/// Mini-batch SGD over the training split with per-epoch reshuffling and
/// early stopping on the validation split; returns the parameters with
/// the best recorded validation loss.
pub fn train(
    ds: &Dataset,
    tcfg: &TrainConfig,
    arch: &NetworkArch,
) -> Result<(NetworkParams, TrainReport)> {
    let start = Instant::now();
    if arch.input_len != ds.input_len || arch.output_len != ds.label_len {
        return Err(Error::Shape(format!(
            "arch expects {}/{} in/out, dataset is {}/{}",
            arch.input_len, arch.output_len, ds.input_len, ds.label_len
        )));
    }
    if !(tcfg.alpha >= 0.0) || tcfg.batch_size == 0 || tcfg.max_steps == 0 {
        return Err(Error::Config(
            "alpha must be >= 0, batch_size and max_steps >= 1".into(),
        ));
    }
    let n_train = ds.n_train();
    let n = ds.n_samples();
    if n_train == 0 || n_train == n {
        return Err(Error::Config(format!(
            "split gives {n_train} training / {} validation rows",
            n - n_train
        )));
    }

    let mut params = init_network(arch, tcfg.seed)?;
    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale_epochs = 0;
    let mut steps = 0;
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxSteps;
    let mut indices: Vec<usize> = (0..n_train).collect();

    'training: for epoch in 1.. {
        let mut shuffle_rng = stream_rng(tcfg.seed, &[1, epoch as u64]);
        indices.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for batch in indices.chunks(tcfg.batch_size) {
            let (grads, batch_loss) = batch_gradients(&params, ds, batch)?;
            if !batch_loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at step {steps} (epoch {epoch})"
                )));
            }
            if tcfg.alpha > 0.0 {
                sgd_step(&mut params, &grads, tcfg.alpha, batch.len())?;
            }
            loss_sum += batch_loss;
            loss_count += batch.len();
            steps += 1;
            if steps >= tcfg.max_steps {
                break;
            }
        }
        let train_mse = loss_sum / loss_count as f64;
        let val_mse = mean_loss(&params, ds, n_train..n)?;
        epochs.push(EpochStats { epoch, train_mse, val_mse });
        if val_mse < best_val {
            best_val = val_mse;
            best_epoch = epoch;
            best_params = params.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= tcfg.patience {
                stop_reason = StopReason::EarlyStopped;
                break 'training;
            }
        }
        if steps >= tcfg.max_steps {
            break 'training;
        }
    }

    let report = TrainReport {
        epochs,
        steps,
        best_epoch,
        best_val_mse: best_val,
        stop_reason,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((best_params, report))
}

/// Self-describing trained-model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    /// Digest of the system configuration the model was trained for.
    pub sys_digest: String,
    pub params: NetworkParams,
    pub best_val_mse: f64,
    pub steps: usize,
}

impl ModelCheckpoint {
    pub fn new(
        params: NetworkParams,
        sys: &SystemConfig,
        report: &TrainReport,
    ) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            sys_digest: sys.digest(),
            params,
            best_val_mse: report.best_val_mse,
            steps: report.steps,
        }
    }
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, serde_json::to_vec_pretty(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let ckpt: ModelCheckpoint = serde_json::from_slice(&std::fs::read(path)?)?;
    if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint format version {} unsupported (expected {CHECKPOINT_FORMAT_VERSION})",
            ckpt.format_version
        )));
    }
    if !ckpt.params.layers.all_finite() {
        return Err(Error::Format("checkpoint holds non-finite parameters".into()));
    }
    Ok(ckpt)
}
