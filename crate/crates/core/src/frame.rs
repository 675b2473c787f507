//! Training-symbol generation and transmit-frame assembly.
//!
//! The training symbol is a constant-amplitude (Zadoff-Chu) sequence in
//! the frequency domain, transformed to time via the unnormalized inverse
//! DFT and power-scaled so the time-domain samples average the configured
//! transmit power. A transmit frame places the cyclic-prefixed symbol at a
//! timing offset `theta` inside the observation window and fills the
//! remaining positions with random data-like samples of the same power, so
//! a misplaced DFT window genuinely suffers inter-symbol interference.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::complex_gaussian;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::fft;

/// Frequency-domain training symbol together with its time-domain form.
///
/// `x` is the local correlator replica used by the receiver; it equals the
/// time-domain symbol `s` element for element.
#[derive(Debug, Clone)]
pub struct TrainingSymbol {
    /// Frequency-domain symbol, length `n`, constant amplitude.
    pub spectrum: Vec<Complex64>,
    /// Time-domain symbol, length `n`, mean power `p_t`.
    pub s: Vec<Complex64>,
    /// Local correlator replica; identical to `s`.
    pub x: Vec<Complex64>,
}

/// One observation window's worth of transmit samples, pre-channel.
#[derive(Debug, Clone)]
pub struct TxFrame {
    /// Length `n_w` sample stream: filler, CP, symbol, filler.
    pub samples: Vec<Complex64>,
    /// Timing offset: index of the first CP sample.
    pub theta: usize,
    /// Equal to `theta`.
    pub cp_start: usize,
    /// First sample of the symbol proper, `theta + n_g`.
    pub symbol_start: usize,
}

/// Zadoff-Chu sequence of length `n` with root `u`, unit amplitude.
///
/// The quadratic phase argument is reduced modulo `2n` in integer
/// arithmetic before the float conversion, so the sequence stays exact for
/// any root and length.
pub fn zadoff_chu(root: u32, n: usize) -> Vec<Complex64> {
    let two_n = 2 * n as u128;
    (0..n)
        .map(|k| {
            let k = k as u128;
            // even length: u*k^2, odd length: u*k*(k+1)
            let q = if n % 2 == 0 { k * k } else { k * (k + 1) };
            let m = (root as u128 * q) % two_n;
            let phase = -std::f64::consts::PI * m as f64 / n as f64;
            Complex64::from_polar(1.0, phase)
        })
        .collect()
}

/// Build a time-domain symbol from an arbitrary spectrum, scaling the
/// spectrum so the time-domain mean power equals `p_t` exactly.
pub fn symbol_from_spectrum(spectrum: &[Complex64], p_t: f64) -> Result<TrainingSymbol> {
    let n = spectrum.len();
    let mut s: Vec<Complex64> = spectrum.to_vec();
    fft::inverse(&mut s);
    let mean_power: f64 = s.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
    if mean_power == 0.0 {
        return Err(Error::Domain("all-zero spectrum cannot be power-scaled".into()));
    }
    let gain = (p_t / mean_power).sqrt();
    let spectrum: Vec<Complex64> = spectrum.iter().map(|v| v * gain).collect();
    for v in &mut s {
        *v *= gain;
    }
    Ok(TrainingSymbol {
        spectrum,
        x: s.clone(),
        s,
    })
}

/// Deterministic constant-amplitude training symbol for `(config, seq_id)`.
///
/// `seq_id` is the Zadoff-Chu root index; odd roots give ideal cyclic
/// autocorrelation at the power-of-two lengths used here.
pub fn generate_training_symbol(config: &SystemConfig, seq_id: u32) -> Result<TrainingSymbol> {
    if seq_id == 0 {
        return Err(Error::Config("seq_id must be >= 1".into()));
    }
    symbol_from_spectrum(&zadoff_chu(seq_id, config.n), config.p_t)
}

/// Place the CP-extended symbol at offset `theta` inside an `n_w`-length
/// window, surrounding it with random data-like filler of power `p_t`.
///
/// Filler samples are drawn in index order: positions before the CP first,
/// positions after the symbol second.
pub fn assemble_frame<R: Rng>(
    symbol: &TrainingSymbol,
    theta: usize,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<TxFrame> {
    let (n, n_g, n_w) = (config.n, config.n_g, config.n_w);
    if symbol.s.len() != n {
        return Err(Error::Shape(format!(
            "symbol length {} does not match n = {n}",
            symbol.s.len()
        )));
    }
    if theta > n - 1 {
        return Err(Error::Domain(format!(
            "theta must lie in 0..={}, got {theta}",
            n - 1
        )));
    }
    let mut samples = vec![Complex64::new(0.0, 0.0); n_w];
    for v in samples.iter_mut().take(theta) {
        *v = complex_gaussian(rng, config.p_t);
    }
    samples[theta..theta + n_g].copy_from_slice(&symbol.s[n - n_g..]);
    samples[theta + n_g..theta + n_g + n].copy_from_slice(&symbol.s);
    for v in samples.iter_mut().skip(theta + n_g + n) {
        *v = complex_gaussian(rng, config.p_t);
    }
    Ok(TxFrame {
        samples,
        theta,
        cp_start: theta,
        symbol_start: theta + n_g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::stream_rng;

    fn cfg() -> SystemConfig {
        SystemConfig::new(128, 32, 1.0, 1.0).unwrap()
    }

    fn toy_cfg() -> SystemConfig {
        SystemConfig::new(16, 4, 1.0, 1.0).unwrap()
    }

    #[test]
    fn dc_only_spectrum_gives_constant_ones() {
        let mut spec = vec![Complex64::new(0.0, 0.0); 16];
        spec[0] = Complex64::new(1.0, 0.0);
        let sym = symbol_from_spectrum(&spec, 1.0).unwrap();
        for v in &sym.s {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn flat_spectrum_gives_power_scaled_impulse() {
        let n = 16;
        let spec = vec![Complex64::new(1.0, 0.0); n];
        let p_t = 2.0;
        let sym = symbol_from_spectrum(&spec, p_t).unwrap();
        assert!((sym.s[0].norm() - (p_t * n as f64).sqrt()).abs() < 1e-9);
        for v in &sym.s[1..] {
            assert!(v.norm() < 1e-9);
        }
        let mean_power: f64 = sym.s.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        assert!((mean_power - p_t).abs() < 1e-12);
    }

    #[test]
    fn zadoff_chu_symbol_is_constant_amplitude_unit_power() {
        let sym = generate_training_symbol(&cfg(), 1).unwrap();
        let mean_power: f64 = sym.s.iter().map(|v| v.norm_sqr()).sum::<f64>() / 128.0;
        assert!((mean_power - 1.0).abs() < 1e-9);
        let mags: Vec<f64> = sym.s.iter().map(|v| v.norm()).collect();
        let (lo, hi) = mags
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), &m| (lo.min(m), hi.max(m)));
        assert!(hi - lo < 1e-9, "time-domain magnitude not constant");
        let fmags: Vec<f64> = sym.spectrum.iter().map(|v| v.norm()).collect();
        let (flo, fhi) = fmags
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), &m| (lo.min(m), hi.max(m)));
        assert!(fhi - flo < 1e-9, "spectrum magnitude not constant");
    }

    #[test]
    fn replica_equals_time_symbol() {
        let sym = generate_training_symbol(&cfg(), 1).unwrap();
        assert_eq!(sym.s, sym.x);
    }

    #[test]
    fn symbol_is_deterministic() {
        let a = generate_training_symbol(&cfg(), 3).unwrap();
        let b = generate_training_symbol(&cfg(), 3).unwrap();
        assert_eq!(a.s, b.s);
    }

    #[test]
    fn frame_layout_at_theta_zero() {
        let cfg = cfg();
        let sym = generate_training_symbol(&cfg, 1).unwrap();
        let frame = assemble_frame(&sym, 0, &cfg, &mut stream_rng(1, &[0])).unwrap();
        assert_eq!(&frame.samples[..32], &sym.s[96..]);
        assert_eq!(&frame.samples[32..160], &sym.s[..]);
        assert_eq!(frame.cp_start, 0);
        assert_eq!(frame.symbol_start, 32);
    }

    #[test]
    fn frame_fits_at_max_theta() {
        let cfg = cfg();
        let sym = generate_training_symbol(&cfg, 1).unwrap();
        let frame = assemble_frame(&sym, cfg.n - 1, &cfg, &mut stream_rng(1, &[1])).unwrap();
        // exclusive end of the symbol lands exactly at index n_w - 1
        assert_eq!(frame.symbol_start + cfg.n, cfg.n_w - 1);
        assert_eq!(&frame.samples[frame.symbol_start..cfg.n_w - 1], &sym.s[..]);
    }

    #[test]
    fn frame_layout_toy() {
        let cfg = toy_cfg();
        let sym = generate_training_symbol(&cfg, 1).unwrap();
        let frame = assemble_frame(&sym, 5, &cfg, &mut stream_rng(1, &[2])).unwrap();
        assert_eq!(frame.samples.len(), 36);
        assert_eq!(&frame.samples[5..9], &sym.s[12..16]); // CP = last 4 symbol samples
        assert_eq!(&frame.samples[9..25], &sym.s[..]);
    }

    #[test]
    fn theta_out_of_range_rejected() {
        let cfg = cfg();
        let sym = generate_training_symbol(&cfg, 1).unwrap();
        assert!(assemble_frame(&sym, cfg.n, &cfg, &mut stream_rng(1, &[3])).is_err());
    }

    #[test]
    fn cyclic_prefix_property() {
        let cfg = cfg();
        let sym = generate_training_symbol(&cfg, 1).unwrap();
        for trial in 0..20u64 {
            let mut rng = stream_rng(9, &[trial]);
            let theta = rng.random_range(0..cfg.n);
            let frame = assemble_frame(&sym, theta, &cfg, &mut rng).unwrap();
            for i in 0..cfg.n_g {
                assert_eq!(frame.samples[theta + i], frame.samples[theta + cfg.n + i]);
            }
        }
    }

    #[test]
    fn cp_and_symbol_region_power() {
        let cfg = cfg();
        let sym = generate_training_symbol(&cfg, 1).unwrap();
        let frame = assemble_frame(&sym, 17, &cfg, &mut stream_rng(4, &[0])).unwrap();
        let region = &frame.samples[17..17 + cfg.n_g + cfg.n];
        let mean_power: f64 =
            region.iter().map(|v| v.norm_sqr()).sum::<f64>() / region.len() as f64;
        assert!((mean_power - cfg.p_t).abs() / cfg.p_t < 1e-9);
    }

    #[test]
    fn frame_is_deterministic_per_seed() {
        let cfg = cfg();
        let sym = generate_training_symbol(&cfg, 1).unwrap();
        let a = assemble_frame(&sym, 40, &cfg, &mut stream_rng(7, &[5])).unwrap();
        let b = assemble_frame(&sym, 40, &cfg, &mut stream_rng(7, &[5])).unwrap();
        assert_eq!(a.samples, b.samples);
    }
}
