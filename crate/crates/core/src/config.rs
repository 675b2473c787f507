//! System-level OFDM dimensions shared by every module.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// OFDM system dimensions and transmit power.
///
/// `n_w` and `n_s` are derived: the observation window holds one full
/// training symbol plus a symbol's worth of search slack (`n_w = 2n + n_g`)
/// and the timing search covers `n_s = n_w - n = n + n_g` candidate
/// offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystemConfig")]
pub struct SystemConfig {
    /// Subcarrier count (transform size), power of two.
    pub n: usize,
    /// Cyclic-prefix length in samples, at most `n / 4`.
    pub n_g: usize,
    /// Observation window length, `2n + n_g` (derived, not serialized).
    #[serde(skip_serializing)]
    pub n_w: usize,
    /// Timing-search length, `n + n_g` (derived, not serialized).
    #[serde(skip_serializing)]
    pub n_s: usize,
    /// Transmit power (linear).
    pub p_t: f64,
    /// Sample period in seconds; metadata used only when mapping
    /// continuous-time delay profiles onto the sample grid.
    pub sample_period: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystemConfig {
    n: usize,
    n_g: usize,
    #[serde(default = "default_p_t")]
    p_t: f64,
    #[serde(default = "default_sample_period")]
    sample_period: f64,
}

fn default_p_t() -> f64 {
    1.0
}

fn default_sample_period() -> f64 {
    1.0
}

impl TryFrom<RawSystemConfig> for SystemConfig {
    type Error = Error;
    fn try_from(raw: RawSystemConfig) -> Result<Self> {
        SystemConfig::new(raw.n, raw.n_g, raw.p_t, raw.sample_period)
    }
}

impl SystemConfig {
    pub fn new(n: usize, n_g: usize, p_t: f64, sample_period: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "n must be a power of two >= 8, got {n}"
            )));
        }
        if n_g == 0 || n_g > n / 4 {
            return Err(Error::Config(format!(
                "n_g must satisfy 0 < n_g <= n/4 = {}, got {n_g}",
                n / 4
            )));
        }
        if !(p_t > 0.0) || !p_t.is_finite() {
            return Err(Error::Config(format!("p_t must be positive, got {p_t}")));
        }
        if !(sample_period > 0.0) || !sample_period.is_finite() {
            return Err(Error::Config(format!(
                "sample_period must be positive, got {sample_period}"
            )));
        }
        Ok(Self {
            n,
            n_g,
            n_w: 2 * n + n_g,
            n_s: n + n_g,
            p_t,
            sample_period,
        })
    }

    /// Stable fingerprint of the configuration, used to gate checkpoint
    /// and dataset compatibility.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!(
            "n={};n_g={};p_t={};t={}",
            self.n, self.n_g, self.p_t, self.sample_period
        ));
        let bytes = hasher.finalize();
        bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_lengths() {
        let cfg = SystemConfig::new(128, 32, 1.0, 1.0).unwrap();
        assert_eq!(cfg.n_w, 288);
        assert_eq!(cfg.n_s, 160);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(SystemConfig::new(100, 16, 1.0, 1.0).is_err()); // not a power of two
        assert!(SystemConfig::new(4, 1, 1.0, 1.0).is_err()); // too small
        assert!(SystemConfig::new(128, 0, 1.0, 1.0).is_err());
        assert!(SystemConfig::new(128, 33, 1.0, 1.0).is_err()); // > n/4
        assert!(SystemConfig::new(128, 32, 0.0, 1.0).is_err());
        assert!(SystemConfig::new(128, 32, 1.0, 0.0).is_err());
        // quarter-length CP is the common operating point and must be accepted
        assert!(SystemConfig::new(128, 32, 1.0, 1.0).is_ok());
    }

    #[test]
    fn digest_tracks_fields() {
        let a = SystemConfig::new(128, 32, 1.0, 1.0).unwrap();
        let b = SystemConfig::new(128, 32, 1.0, 1.0).unwrap();
        let c = SystemConfig::new(128, 16, 1.0, 1.0).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn strict_json_parsing() {
        let ok: SystemConfig = serde_json::from_str(r#"{"n":128,"n_g":32}"#).unwrap();
        assert_eq!(ok.n_w, 288);
        assert!(serde_json::from_str::<SystemConfig>(r#"{"n":128,"n_g":32,"bogus":1}"#).is_err());
        assert!(serde_json::from_str::<SystemConfig>(r#"{"n":100,"n_g":32}"#).is_err());
    }
}
