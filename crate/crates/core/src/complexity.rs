//! Complex-multiplication cost model for the compared synchronizers.
//!
//! Costs are counted in complex multiplications (CM, about 4 FLOPs).
//! `NnOnly` is the network by itself and `Correlator` the classic
//! correlation front-end; with `n_s = n + n_g` and a CP shorter than a
//! third of the symbol, the network is always cheaper than the
//! correlator it post-processes.

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};

/// Dimensions entering the cost expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityDims {
    pub n: usize,
    pub n_s: usize,
    pub n_g: usize,
    /// Channel path count (used only by the joint estimator).
    pub l: usize,
}

impl ComplexityDims {
    pub fn new(n: usize, n_s: usize, n_g: usize, l: usize) -> Result<Self> {
        if n == 0 || n_s == 0 || n_g == 0 || l == 0 {
            return Err(Error::Domain("complexity dimensions must be positive".into()));
        }
        Ok(Self { n, n_s, n_g, l })
    }

    /// Dimensions implied by a system configuration and a path count.
    pub fn from_config(config: &SystemConfig, l: usize) -> Result<Self> {
        Self::new(config.n, config.n_s, config.n_g, l)
    }
}

/// Synchronizers (and sub-blocks) with published cost expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmMethod {
    /// Joint timing sync and channel estimation.
    JointTsCe,
    /// Label-designed extreme-learning-machine synchronizer.
    Elm,
    /// Two-hidden-layer dense baseline (correlator included).
    Dnn,
    /// Conv synchronizer of this crate (correlator included).
    Proposed,
    /// The conv network alone, without the correlation front-end.
    NnOnly,
    /// The classic correlation front-end alone.
    Correlator,
}

impl CmMethod {
    pub const ALL: [CmMethod; 6] = [
        CmMethod::JointTsCe,
        CmMethod::Elm,
        CmMethod::Dnn,
        CmMethod::Proposed,
        CmMethod::NnOnly,
        CmMethod::Correlator,
    ];

    pub fn csv_name(&self) -> &'static str {
        match self {
            CmMethod::JointTsCe => "joint_ts_ce",
            CmMethod::Elm => "elm",
            CmMethod::Dnn => "dnn",
            CmMethod::Proposed => "proposed",
            CmMethod::NnOnly => "nn_only",
            CmMethod::Correlator => "correlator",
        }
    }
}

/// Complex-multiplication count for one method, rounded half-up.
pub fn complexity_cm(method: CmMethod, dims: &ComplexityDims) -> u64 {
    let n = dims.n as f64;
    let n_s = dims.n_s as f64;
    let n_g = dims.n_g as f64;
    let cm = match method {
        CmMethod::JointTsCe => {
            let mut sum = dims.l as f64 * n * n_s;
            for l in 1..=dims.l {
                let lf = l as f64;
                sum += 3.0 * lf * n_s + lf * lf * lf + lf * lf * n_s;
            }
            sum
        }
        CmMethod::Elm => 16.0 * n_s * n_s + 4.0 * n_s + 1.5 * n - 4.0,
        CmMethod::Dnn => 0.75 * n_s * n_s + n * n_s + 2.0 * n_s + n - 2.0,
        CmMethod::Proposed => 1.5 * n_s * n_s + 3.0 * n_s + n - 2.0,
        CmMethod::NnOnly => 0.5 * n_s * n_s + n_s * n_g,
        CmMethod::Correlator => n_s * n,
    };
    (cm + 0.5).floor() as u64
}
