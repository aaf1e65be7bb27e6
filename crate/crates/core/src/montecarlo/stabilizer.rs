//! Per-pulse LO intensity stabilisation: a small fraction of each pulse is
//! tapped to a monitor photodiode and an amplifier/attenuator brings the
//! remainder to a fixed target.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{chunk_rng, RngPurpose, CHUNK_PULSES};
use crate::error::{invalid, Result};
use crate::model::DetectorModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilizerConfig {
    tap_fraction: f64,
    target_intensity: f64,
    gain_min: f64,
    gain_max: f64,
    monitor_noise_rel: f64,
}

impl StabilizerConfig {
    pub fn new(
        tap_fraction: f64,
        target_intensity: f64,
        gain_min: f64,
        gain_max: f64,
        monitor_noise_rel: f64,
    ) -> Result<Self> {
        if !(tap_fraction > 0.0 && tap_fraction < 1.0) {
            return Err(invalid("tap_fraction", tap_fraction, "must lie in (0, 1)"));
        }
        if !(target_intensity.is_finite() && target_intensity > 0.0) {
            return Err(invalid("target_intensity", target_intensity, "must be finite and > 0"));
        }
        if !(gain_min > 0.0 && gain_min <= 1.0) {
            return Err(invalid("gain_min", gain_min, "must lie in (0, 1]"));
        }
        if !(gain_max >= 1.0 && gain_max.is_finite()) {
            return Err(invalid("gain_max", gain_max, "must be finite and >= 1"));
        }
        if !(monitor_noise_rel.is_finite() && monitor_noise_rel >= 0.0) {
            return Err(invalid("monitor_noise_rel", monitor_noise_rel, "must be finite and >= 0"));
        }
        Ok(Self {
            tap_fraction,
            target_intensity,
            gain_min,
            gain_max,
            monitor_noise_rel,
        })
    }

    /// 1% tap, gain range `[0.01, 100]`, noiseless monitor, target at the
    /// detector's calibrated operating point.
    pub fn for_detector(detector: &DetectorModel) -> Self {
        Self {
            tap_fraction: 0.01,
            target_intensity: detector.lo_photons_cal() * detector.lo_gain(),
            gain_min: 0.01,
            gain_max: 100.0,
            monitor_noise_rel: 0.0,
        }
    }

    pub fn with_monitor_noise(mut self, rel: f64) -> Result<Self> {
        if !(rel.is_finite() && rel >= 0.0) {
            return Err(invalid("monitor_noise_rel", rel, "must be finite and >= 0"));
        }
        self.monitor_noise_rel = rel;
        Ok(self)
    }

    pub fn with_gain_range(self, gain_min: f64, gain_max: f64) -> Result<Self> {
        Self::new(self.tap_fraction, self.target_intensity, gain_min, gain_max, self.monitor_noise_rel)
    }

    pub fn tap_fraction(&self) -> f64 {
        self.tap_fraction
    }

    pub fn target_intensity(&self) -> f64 {
        self.target_intensity
    }

    pub fn gain_min(&self) -> f64 {
        self.gain_min
    }

    pub fn gain_max(&self) -> f64 {
        self.gain_max
    }

    pub fn monitor_noise_rel(&self) -> f64 {
        self.monitor_noise_rel
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stabilization {
    pub gains: Vec<f64>,
    /// Intensity reaching the detector, `(1 - tap) * gain * input`.
    pub stabilized: Vec<f64>,
    /// `|stabilized - target| / target`.
    pub residuals: Vec<f64>,
    /// Pulses whose requested gain fell outside `[gain_min, gain_max]`.
    pub clipped: usize,
}

/// Stabilises each pulse towards the configured target. Monitor noise is
/// drawn from a stream derived from `seed`.
pub fn stabilize_lo(intensities: &[f64], config: &StabilizerConfig, seed: u64) -> Stabilization {
    let through = 1.0 - config.tap_fraction;
    let target = config.target_intensity;
    let chunks: Vec<Vec<(f64, f64, f64, bool)>> = intensities
        .par_chunks(CHUNK_PULSES)
        .enumerate()
        .map(|(c, chunk)| {
            let mut rng = chunk_rng(seed, RngPurpose::Monitor, c as u64);
            chunk
                .iter()
                .map(|&intensity| {
                    let measured = if config.monitor_noise_rel > 0.0 {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        intensity * (1.0 + config.monitor_noise_rel * z)
                    } else {
                        intensity
                    };
                    let wanted = if measured > 0.0 {
                        target / (through * measured)
                    } else {
                        f64::INFINITY
                    };
                    let gain = wanted.clamp(config.gain_min, config.gain_max);
                    let out = intensity * through * gain;
                    (gain, out, (out - target).abs() / target, gain != wanted)
                })
                .collect()
        })
        .collect();

    let n = intensities.len();
    let mut result = Stabilization {
        gains: Vec::with_capacity(n),
        stabilized: Vec::with_capacity(n),
        residuals: Vec::with_capacity(n),
        clipped: 0,
    };
    for (gain, out, residual, clipped) in chunks.into_iter().flatten() {
        result.gains.push(gain);
        result.stabilized.push(out);
        result.residuals.push(residual);
        result.clipped += clipped as usize;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::stats::{block_standard_error, mean, variance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(noise: f64) -> StabilizerConfig {
        StabilizerConfig::new(0.05, 1e9, 0.01, 100.0, noise).unwrap()
    }

    #[test]
    fn fixed_point() {
        let input = vec![1e9; 1000];
        let s = stabilize_lo(&input, &config(0.0), 1);
        for (&g, &r) in s.gains.iter().zip(&s.residuals) {
            assert!((g - 1.0 / 0.95).abs() < 1e-15);
            assert!(r < 1e-15);
        }
        assert_eq!(s.clipped, 0);
    }

    #[test]
    fn exact_inversion_without_monitor_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input: Vec<f64> = (0..100_000).map(|_| 1e9 * rng.random_range(0.9..1.1)).collect();
        let s = stabilize_lo(&input, &config(0.0), 1);
        assert!(s.residuals.iter().all(|&r| r <= 1e-12));
        let cv = variance(&s.stabilized).sqrt() / mean(&s.stabilized);
        assert!(cv <= 1e-12, "cv {cv}");
    }

    #[test]
    fn residual_tracks_monitor_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let input: Vec<f64> = (0..n).map(|_| 1e9 * rng.random_range(0.9..1.1)).collect();
        let s = stabilize_lo(&input, &config(1e-3), 9);
        // Signed relative error is -z sigma / (1 + z sigma): std ~ 1e-3 to first order.
        let signed: Vec<f64> = s.stabilized.iter().map(|&x| x / 1e9 - 1.0).collect();
        let sd = variance(&signed).sqrt();
        let blocks: Vec<f64> = signed.chunks(n / 100).map(|b| variance(b).sqrt()).collect();
        let se = block_standard_error(&blocks);
        assert!((sd - 1e-3).abs() <= 5.0 * se, "sd {sd}, se {se}");
    }

    #[test]
    fn narrow_gain_range_clips() {
        let cfg = config(0.0).with_gain_range(0.9, 1.1).unwrap();
        let s = stabilize_lo(&[1e9, 4e9, 0.5e9], &cfg, 0);
        assert_eq!(s.clipped, 2);
        assert_eq!(s.gains[1], 0.9);
        assert_eq!(s.gains[2], 1.1);
    }

    #[test]
    fn rejects_invalid_config() {
        assert!(StabilizerConfig::new(0.0, 1e9, 0.5, 2.0, 0.0).is_err());
        assert!(StabilizerConfig::new(1.0, 1e9, 0.5, 2.0, 0.0).is_err());
        assert!(StabilizerConfig::new(0.1, 1e9, 1.5, 2.0, 0.0).is_err());
        assert!(StabilizerConfig::new(0.1, 1e9, 0.5, 0.9, 0.0).is_err());
        assert!(StabilizerConfig::new(0.1, -1.0, 0.5, 2.0, 0.0).is_err());
    }
}
