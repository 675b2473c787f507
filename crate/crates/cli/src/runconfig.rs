//! Run-configuration document: JSON file, dotted-path overrides, derived
//! section seeds, and the reproducibility manifest.
//!
//! One JSON document configures every pipeline stage. Section seeds
//! (`data.master_seed`, `train.seed`, `eval.master_seed`,
//! `sweep.master_seed`) may be omitted; they are then derived from the
//! top-level `master_seed` with fixed tags, so a single seed pins the
//! whole pipeline while explicit section seeds still win when present.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use tsync_core::eval::{ChannelSpec, EvalConfig, Method};
use tsync_core::seeds::derive_seed;
use tsync_core::train::{DatasetGenConfig, TrainConfig, DEFAULT_SEQ_ID};
use tsync_core::SystemConfig;

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "TSYNC_OUT";

const SEED_TAG_DATA: u64 = 1;
const SEED_TAG_TRAIN: u64 = 2;
const SEED_TAG_EVAL: u64 = 3;
const SEED_TAG_SWEEP: u64 = 4;

/// Declarative multi-channel sweep: the cross product of channels and SNR
/// points, with every method run on paired trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(with = "tsync_core::numfmt::vec")]
    pub snr_points_db: Vec<f64>,
    pub trials_per_point: usize,
    pub methods: Vec<Method>,
    /// Explicit channel descriptors.
    #[serde(default)]
    pub channels: Vec<ChannelSpec>,
    /// Shorthand for exponential channels indexed by maximum delay:
    /// each value `tau` expands to `l = tau + 1` taps with a decay that
    /// puts the last tap 10 dB below the first (`eta = ln(10) / tau`).
    #[serde(default)]
    pub exp_tau_l: Vec<usize>,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_seq_id")]
    pub seq_id: u32,
    pub master_seed: u64,
}

fn default_seq_id() -> u32 {
    DEFAULT_SEQ_ID
}

impl SweepSection {
    /// Expand into one `EvalConfig` per channel, in declaration order
    /// (explicit channels first, then the `exp_tau_l` shorthand).
    pub fn expand(&self) -> Result<Vec<EvalConfig>> {
        let mut channels = self.channels.clone();
        for &tau in &self.exp_tau_l {
            if tau == 0 {
                bail!("exp_tau_l entries must be >= 1");
            }
            channels.push(ChannelSpec::Exponential {
                l: tau + 1,
                eta: (10f64).ln() / tau as f64,
            });
        }
        if channels.is_empty() {
            bail!("sweep section lists no channels");
        }
        Ok(channels
            .into_iter()
            .map(|channel| EvalConfig {
                snr_points_db: self.snr_points_db.clone(),
                channel,
                trials_per_point: self.trials_per_point,
                methods: self.methods.clone(),
                master_seed: self.master_seed,
                epsilon: self.epsilon,
                seq_id: self.seq_id,
            })
            .collect())
    }
}

/// The full run document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub master_seed: u64,
    /// Output directory, joined under the output root when relative.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<DatasetGenConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub eval: Option<EvalConfig>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

/// Set `value` at a dotted path, creating intermediate objects. The
/// value text is parsed as JSON first, falling back to a plain string.
fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override {spec:?} is not of the form key.path=value"))?;
    if path.is_empty() {
        bail!("override {spec:?} has an empty key path");
    }
    let parsed: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("override {spec:?}: {part:?} is not reachable through an object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!()
}

/// Fill in absent section seeds from the top-level master seed.
fn inject_section_seeds(root: &mut Value) {
    let Some(master) = root.get("master_seed").and_then(Value::as_u64) else {
        return;
    };
    let fills = [
        ("data", "master_seed", SEED_TAG_DATA),
        ("train", "seed", SEED_TAG_TRAIN),
        ("eval", "master_seed", SEED_TAG_EVAL),
        ("sweep", "master_seed", SEED_TAG_SWEEP),
    ];
    for (section, key, tag) in fills {
        if let Some(Value::Object(obj)) = root.get_mut(section) {
            obj.entry(key.to_string())
                .or_insert_with(|| Value::from(derive_seed(master, &[tag])));
        }
    }
}

/// Parse, apply overrides, derive seeds, and strictly validate. Unknown
/// keys anywhere in the document are rejected with their location.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<(RunConfig, Value)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut value: Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
    for spec in overrides {
        apply_override(&mut value, spec)?;
    }
    inject_section_seeds(&mut value);
    let cfg: RunConfig = serde_json::from_value(value.clone())
        .map_err(|e| anyhow!("config {} is invalid: {e}", path.display()))?;
    Ok((cfg, value))
}

/// Where outputs go: an explicit `--out` wins, otherwise the config's
/// `output_dir` beneath the root named by `TSYNC_OUT` (default `out`).
pub fn resolve_outdir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    let root = std::env::var_os(OUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"));
    let rel = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("run"));
    if rel.is_absolute() {
        rel
    } else {
        root.join(rel)
    }
}

fn digest_of(value: &Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(value.to_string());
    let bytes = hasher.finalize();
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Write `manifest.json`: everything needed to reproduce the run
/// byte-for-byte (resolved config, seeds, digests, format versions).
/// Deliberately free of timestamps and worker counts.
pub fn write_manifest(outdir: &Path, command: &str, resolved: &Value, sys: &SystemConfig) -> Result<()> {
    std::fs::create_dir_all(outdir)?;
    let manifest = serde_json::json!({
        "command": command,
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config_digest": digest_of(resolved),
        "system_digest": sys.digest(),
        "resolved_config": resolved,
    });
    std::fs::write(outdir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_doc() -> Value {
        serde_json::json!({
            "system": {"n": 16, "n_g": 4},
            "master_seed": 7,
            "data": {"n_samples": 10, "snr_range_db": [0.0, 20.0]},
            "train": {},
            "eval": {
                "snr_points_db": [10.0],
                "channel": {"exponential": {"l": 2, "eta": 0.1}},
                "trials_per_point": 5,
                "methods": ["classic_argmax"]
            }
        })
    }

    fn load_value(mut v: Value, overrides: &[&str]) -> Result<RunConfig> {
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        inject_section_seeds(&mut v);
        Ok(serde_json::from_value(v)?)
    }

    #[test]
    fn section_seeds_are_derived_from_master() {
        let cfg = load_value(base_doc(), &[]).unwrap();
        assert_eq!(cfg.data.as_ref().unwrap().master_seed, derive_seed(7, &[1]));
        assert_eq!(cfg.train.as_ref().unwrap().seed, derive_seed(7, &[2]));
        assert_eq!(cfg.eval.as_ref().unwrap().master_seed, derive_seed(7, &[3]));
    }

    #[test]
    fn explicit_section_seed_wins() {
        let mut doc = base_doc();
        doc["data"]["master_seed"] = Value::from(123u64);
        let cfg = load_value(doc, &[]).unwrap();
        assert_eq!(cfg.data.unwrap().master_seed, 123);
    }

    #[test]
    fn overrides_navigate_dotted_paths() {
        let cfg = load_value(
            base_doc(),
            &["data.n_samples=99", "eval.trials_per_point=42", "system.n=32"],
        )
        .unwrap();
        assert_eq!(cfg.data.unwrap().n_samples, 99);
        assert_eq!(cfg.eval.unwrap().trials_per_point, 42);
        assert_eq!(cfg.system.n, 32);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut doc = base_doc();
        doc["data"]["bogus_knob"] = Value::from(1);
        let err = load_value(doc, &[]).unwrap_err().to_string();
        assert!(err.contains("bogus_knob"), "{err}");
    }

    #[test]
    fn sweep_expansion_matches_tau_shorthand() {
        let sweep: SweepSection = serde_json::from_value(serde_json::json!({
            "snr_points_db": [10.0],
            "trials_per_point": 100,
            "methods": ["prop", "classic_argmax"],
            "channels": [{"tdl": {"name": "TDL-A", "delay_spread": 135e-9}}],
            "exp_tau_l": [22, 27],
            "master_seed": 5
        }))
        .unwrap();
        let evals = sweep.expand().unwrap();
        assert_eq!(evals.len(), 3);
        match &evals[1].channel {
            ChannelSpec::Exponential { l, eta } => {
                assert_eq!(*l, 23);
                assert!((eta - (10f64).ln() / 22.0).abs() < 1e-15);
            }
            other => panic!("unexpected channel {other:?}"),
        }
    }
}
