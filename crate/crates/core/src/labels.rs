//! Binary timing-metric training targets and their mismatch diagnostic.
//!
//! A label marks every DFT-window start position that is free of
//! inter-symbol interference under an assumed maximum multipath delay
//! `tau_hat`: the contiguous run `{theta + tau_hat + 1, ..., theta + n_g}`.
//! Randomizing `tau_hat` over the upper half of the CP at dataset time is
//! what hardens the learned synchronizer against delay uncertainty.

use rand::Rng;

use crate::config::SystemConfig;
use crate::error::{Error, Result};

/// Binary target over the `n_s` candidate offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVec {
    /// 0/1 mask, length `n_s`; ones exactly on
    /// `{theta + tau_hat + 1, ..., theta + n_g}`.
    pub gamma: Vec<u8>,
    /// Assumed maximum multipath delay used to build the label.
    pub tau_hat: usize,
    pub theta: usize,
}

impl LabelVec {
    /// Real-valued view for loss computation.
    pub fn to_target(&self) -> Vec<f64> {
        self.gamma.iter().map(|&g| g as f64).collect()
    }

    /// Indices of the ones.
    pub fn support(&self) -> Vec<usize> {
        self.gamma
            .iter()
            .enumerate()
            .filter_map(|(i, &g)| (g == 1).then_some(i))
            .collect()
    }
}

/// Elementwise XOR of the labels built from the assumed and the true
/// maximum delay; nonzero exactly where the assumed label is wrong.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMismatch {
    pub gamma_err: Vec<u8>,
    pub tau_true: usize,
    pub tau_hat: usize,
}

/// Draw `tau_hat` uniformly from `{floor(n_g/2), ..., n_g - 1}`.
pub fn sample_tau_hat<R: Rng>(config: &SystemConfig, rng: &mut R) -> usize {
    rng.random_range(config.n_g / 2..=config.n_g - 1)
}

/// Label with ones on `{theta + tau_hat + 1, ..., theta + n_g}`.
pub fn make_label(theta: usize, tau_hat: usize, config: &SystemConfig) -> Result<LabelVec> {
    if theta > config.n - 1 {
        return Err(Error::Domain(format!(
            "theta must lie in 0..={}, got {theta}",
            config.n - 1
        )));
    }
    if tau_hat > config.n_g - 1 {
        return Err(Error::Domain(format!(
            "tau_hat must lie in 0..={}, got {tau_hat}",
            config.n_g - 1
        )));
    }
    let mut gamma = vec![0u8; config.n_s];
    for slot in &mut gamma[theta + tau_hat + 1..=theta + config.n_g] {
        *slot = 1;
    }
    Ok(LabelVec { gamma, tau_hat, theta })
}

/// Mismatch between the `tau_hat`-label and the `tau_true`-label; its
/// support is `{theta + min + 1, ..., theta + max}` and empty when equal.
pub fn label_mismatch(
    theta: usize,
    tau_true: usize,
    tau_hat: usize,
    config: &SystemConfig,
) -> Result<LabelMismatch> {
    let assumed = make_label(theta, tau_hat, config)?;
    let actual = make_label(theta, tau_true, config)?;
    let gamma_err = assumed
        .gamma
        .iter()
        .zip(&actual.gamma)
        .map(|(a, b)| a ^ b)
        .collect();
    Ok(LabelMismatch { gamma_err, tau_true, tau_hat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::stream_rng;

    fn cfg() -> SystemConfig {
        SystemConfig::new(128, 32, 1.0, 1.0).unwrap()
    }

    #[test]
    fn label_ones_count_and_placement() {
        let cfg = cfg();
        let l = make_label(0, 16, &cfg).unwrap();
        assert_eq!(l.support(), (17..=32).collect::<Vec<_>>());
        assert_eq!(l.gamma.iter().filter(|&&g| g == 1).count(), 16);

        let narrow = make_label(0, 31, &cfg).unwrap();
        assert_eq!(narrow.support(), vec![32]);

        let boundary = make_label(127, 31, &cfg).unwrap();
        assert_eq!(boundary.support(), vec![159]);
        assert_eq!(boundary.gamma.len(), cfg.n_s);
    }

    #[test]
    fn label_rejects_out_of_range() {
        let cfg = cfg();
        assert!(make_label(128, 0, &cfg).is_err());
        assert!(make_label(0, 32, &cfg).is_err());
    }

    #[test]
    fn mismatch_examples() {
        let cfg = cfg();
        let m = label_mismatch(0, 22, 27, &cfg).unwrap();
        let ones: Vec<usize> = (0..m.gamma_err.len()).filter(|&i| m.gamma_err[i] == 1).collect();
        assert_eq!(ones, (23..=27).collect::<Vec<_>>());

        let zero = label_mismatch(40, 9, 9, &cfg).unwrap();
        assert!(zero.gamma_err.iter().all(|&g| g == 0));

        let m2 = label_mismatch(5, 10, 12, &cfg).unwrap();
        let ones2: Vec<usize> = (0..m2.gamma_err.len()).filter(|&i| m2.gamma_err[i] == 1).collect();
        assert_eq!(ones2, vec![16, 17]);
    }

    #[test]
    fn mismatch_is_xor_of_labels_exhaustive() {
        let cfg = SystemConfig::new(32, 8, 1.0, 1.0).unwrap();
        for theta in 0..cfg.n {
            for a in 0..cfg.n_g {
                for b in 0..cfg.n_g {
                    let m = label_mismatch(theta, a, b, &cfg).unwrap();
                    let la = make_label(theta, a, &cfg).unwrap();
                    let lb = make_label(theta, b, &cfg).unwrap();
                    for i in 0..cfg.n_s {
                        assert_eq!(m.gamma_err[i], lb.gamma[i] ^ la.gamma[i]);
                    }
                    let support: usize =
                        m.gamma_err.iter().map(|&g| g as usize).sum();
                    assert_eq!(support, a.abs_diff(b));
                }
            }
        }
    }

    #[test]
    fn support_is_contiguous_and_ends_at_cp_edge() {
        let cfg = cfg();
        for theta in [0, 1, 64, 127] {
            for tau in 0..cfg.n_g {
                let l = make_label(theta, tau, &cfg).unwrap();
                let s = l.support();
                assert_eq!(*s.last().unwrap(), theta + cfg.n_g);
                for w in s.windows(2) {
                    assert_eq!(w[1], w[0] + 1);
                }
            }
        }
    }

    #[test]
    fn larger_tau_hat_keeps_label_inside_isi_free_region() {
        let cfg = cfg();
        for tau_true in 0..cfg.n_g {
            for tau_hat in tau_true..cfg.n_g {
                let wide = make_label(9, tau_true, &cfg).unwrap();
                let tight = make_label(9, tau_hat, &cfg).unwrap();
                for (t, w) in tight.gamma.iter().zip(&wide.gamma) {
                    assert!(t <= w, "assumed label escapes the true ISI-free region");
                }
            }
        }
    }

    #[test]
    fn tau_hat_sampling_ranges() {
        let two = SystemConfig::new(8, 2, 1.0, 1.0).unwrap();
        let mut rng = stream_rng(1, &[0]);
        for _ in 0..100 {
            assert_eq!(sample_tau_hat(&two, &mut rng), 1);
        }
        let four = SystemConfig::new(16, 4, 1.0, 1.0).unwrap();
        let mut seen = [false; 4];
        for _ in 0..200 {
            let v = sample_tau_hat(&four, &mut rng);
            assert!(v == 2 || v == 3);
            seen[v] = true;
        }
        assert!(seen[2] && seen[3]);
    }

    #[test]
    fn tau_hat_is_uniform_chi_square() {
        // 16 bins for n_g = 32; chi-square 0.99 quantile at 15 dof
        let cfg = cfg();
        let mut rng = stream_rng(2024, &[0]);
        let draws = 100_000usize;
        let mut counts = [0usize; 16];
        for _ in 0..draws {
            let v = sample_tau_hat(&cfg, &mut rng);
            assert!((16..=31).contains(&v));
            counts[v - 16] += 1;
        }
        let expected = draws as f64 / 16.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(stat < 30.578, "chi-square statistic {stat} too large");
    }
}
