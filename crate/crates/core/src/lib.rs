//! Desk-scale OFDM timing-synchronization laboratory.
//!
//! The crate simulates an OFDM receiver's timing-offset search end to end:
//! training-symbol generation and frame assembly ([`frame`]), multipath
//! fading channels with CFO and AWGN ([`channel`]), the classic
//! cross-correlation timing metric ([`metric`]), binary timing-metric
//! training targets ([`labels`]), a small from-scratch 1-D CNN trained by
//! SGD ([`nn`], [`train`]), and Monte-Carlo timing-error evaluation with a
//! complexity calculator ([`eval`], [`complexity`]).
//!
//! All randomness flows through caller-supplied streams derived from a
//! master seed ([`seeds`]), so every dataset, trained model, and
//! Monte-Carlo sweep is reproducible bit for bit regardless of worker
//! count.

pub mod channel;
pub mod complexity;
pub mod config;
pub mod error;
pub mod eval;
mod fft;
pub mod frame;
pub mod labels;
pub mod metric;
pub mod nn;
pub mod numfmt;
pub mod seeds;
pub mod train;

pub use channel::{
    exponential_pdp, propagate, sample_channel, snr_to_noise_variance, tdl_profile,
    ChannelRealization, Observation, ObservationParams, PdpProfile,
};
pub use complexity::{complexity_cm, CmMethod, ComplexityDims};
pub use config::SystemConfig;
pub use error::{Error, Result};
pub use eval::{estimate_offset, is_correct, run_monte_carlo, EvalConfig, EvalResult, Method};
pub use frame::{assemble_frame, generate_training_symbol, TrainingSymbol, TxFrame};
pub use labels::{label_mismatch, make_label, sample_tau_hat, LabelMismatch, LabelVec};
pub use metric::{classic_estimate, compute_metric, ideal_metric, TimingMetricVec};
pub use nn::{
    backward, forward, grad_check, init_network, mse_loss, sgd_step, Gradients, NetworkArch,
    NetworkParams, Variant,
};
pub use train::{
    generate_dataset, load_checkpoint, save_checkpoint, train, Dataset, DatasetGenConfig,
    LabelMode, ModelCheckpoint, TrainConfig, TrainReport,
};
