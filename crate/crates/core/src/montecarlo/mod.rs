//! Pulse-level Monte Carlo of Gaussian-modulated coherent states measured
//! by a nonideal balanced homodyne detector.
//!
//! Per pulse, in shot-noise units:
//!
//! ```text
//! q_A  = x_A or p_A (chosen by theta) + vacuum noise           Var = V
//! q_B  = sqrt(T) q_A + channel noise of variance 1 - T + T eps
//! raw  = sqrt(eta I) (sqrt(eta) q_B + sqrt(1 - eta) x_N) + x_el
//! ```
//!
//! `I` is the LO photon number of the pulse and `x_el` has the fixed
//! variance `eta * I_cal * N_el_cal` set at calibration, so dividing by
//! `sqrt(eta I)` leaves electronic noise `N_el_cal * I_cal / I`.
//!
//! # Reproducibility
//!
//! Pulses are generated in chunks of [`CHUNK_PULSES`]. Chunk `c` draws from
//! a ChaCha8 generator keyed by `seed` (mixed with a per-purpose constant)
//! on stream `c`, so the batch is a pure function of `(seed, n)` whatever
//! the number of worker threads.

mod estimate;
mod stabilizer;
pub mod stats;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

pub use estimate::{estimate_parameters, EstimationReport, StandardErrors};
pub use stabilizer::{stabilize_lo, Stabilization, StabilizerConfig};

use crate::error::{invalid, Error, Result};
use crate::model::{ChannelModel, DetectorModel, ProtocolParams};
use crate::numfmt::sig12;

pub const CHUNK_PULSES: usize = 1 << 14;
/// Saturation rail in standard deviations of the calibrated raw output.
pub const DEFAULT_RAIL_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy)]
pub(crate) enum RngPurpose {
    Pulses,
    LoFluctuation,
    Monitor,
}

pub(crate) fn chunk_rng(seed: u64, purpose: RngPurpose, chunk: u64) -> ChaCha8Rng {
    const SALT: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (purpose as u64 + 1).wrapping_mul(SALT));
    rng.set_stream(chunk);
    rng
}

/// Relative LO intensity applied on top of the detector's operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LoProfile {
    Constant(f64),
    /// Log-normal fluctuation with unit mean and the given relative
    /// standard deviation.
    Stochastic { rel_std: f64, seed: u64 },
    /// One gain per pulse.
    Sequence(Vec<f64>),
}

impl LoProfile {
    /// Per-pulse LO photon numbers around `nominal`.
    pub fn intensities(&self, nominal: f64, n: usize) -> Result<Vec<f64>> {
        let out = match self {
            LoProfile::Constant(g) => {
                if !(g.is_finite() && *g > 0.0) {
                    return Err(invalid("LO gain", *g, "must be finite and > 0"));
                }
                vec![nominal * g; n]
            }
            LoProfile::Stochastic { rel_std, seed } => {
                if !(rel_std.is_finite() && *rel_std >= 0.0) {
                    return Err(invalid("LO rel_std", *rel_std, "must be finite and >= 0"));
                }
                let s2 = rel_std.powi(2).ln_1p();
                let (mu, s) = (-0.5 * s2, s2.sqrt());
                let counts: Vec<usize> = chunk_lengths(n).collect();
                counts
                    .par_iter()
                    .enumerate()
                    .flat_map_iter(|(c, &len)| {
                        let mut rng = chunk_rng(*seed, RngPurpose::LoFluctuation, c as u64);
                        (0..len)
                            .map(|_| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                nominal * (mu + s * z).exp()
                            })
                            .collect::<Vec<_>>()
                    })
                    .collect()
            }
            LoProfile::Sequence(gains) => {
                if gains.len() != n {
                    return Err(Error::LengthMismatch {
                        what: "LO gain sequence",
                        got: gains.len(),
                        expected: n,
                    });
                }
                if let Some(&g) = gains.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
                    return Err(invalid("LO gain", g, "must be finite and > 0"));
                }
                gains.iter().map(|g| nominal * g).collect()
            }
        };
        Ok(out)
    }
}

fn chunk_lengths(n: usize) -> impl Iterator<Item = usize> {
    (0..n.div_ceil(CHUNK_PULSES)).map(move |c| CHUNK_PULSES.min(n - c * CHUNK_PULSES))
}

/// Quadrature Bob measures on a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quadrature {
    /// `theta = 0`
    X,
    /// `theta = pi/2`
    P,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseBatch {
    pub n: usize,
    pub seed: u64,
    pub x_a: Vec<f64>,
    pub p_a: Vec<f64>,
    pub theta: Vec<Quadrature>,
    pub lo_intensity: Vec<f64>,
    pub raw_output: Vec<f64>,
    pub saturated: Vec<bool>,
    pub saturation_rail: f64,
    /// Present when the LO went through the stabiliser.
    pub stabilization: Option<Stabilization>,
}

impl PulseBatch {
    /// Alice's value of the quadrature Bob measured, per pulse.
    pub fn matched_alice(&self) -> Vec<f64> {
        self.theta
            .iter()
            .enumerate()
            .map(|(i, q)| match q {
                Quadrature::X => self.x_a[i],
                Quadrature::P => self.p_a[i],
            })
            .collect()
    }

    pub fn saturated_count(&self) -> usize {
        self.saturated.iter().filter(|&&s| s).count()
    }

    /// Columns `pulse_index, x_a, p_a, theta, lo_intensity, raw_output,
    /// saturated`; `theta` is 0 for x and 1 for p, `saturated` is 0 or 1.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "pulse_index,x_a,p_a,theta,lo_intensity,raw_output,saturated")?;
        for i in 0..self.n {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                i,
                sig12(self.x_a[i]),
                sig12(self.p_a[i]),
                (self.theta[i] == Quadrature::P) as u8,
                sig12(self.lo_intensity[i]),
                sig12(self.raw_output[i]),
                self.saturated[i] as u8
            )?;
        }
        Ok(())
    }
}

/// Everything needed to generate a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub params: ProtocolParams,
    pub channel: ChannelModel,
    pub detector: DetectorModel,
    pub lo: LoProfile,
    pub stabilizer: Option<StabilizerConfig>,
    pub rail_sigmas: f64,
}

impl Simulation {
    pub fn new(params: ProtocolParams, channel: ChannelModel, detector: DetectorModel, lo: LoProfile) -> Self {
        Self {
            params,
            channel,
            detector,
            lo,
            stabilizer: None,
            rail_sigmas: DEFAULT_RAIL_SIGMAS,
        }
    }

    pub fn with_stabilizer(mut self, config: StabilizerConfig) -> Self {
        self.stabilizer = Some(config);
        self
    }

    /// Operating LO photon number, `lo_photons_cal * lo_gain`.
    pub fn nominal_lo(&self) -> f64 {
        self.detector.lo_photons_cal() * self.detector.lo_gain()
    }

    /// Standard deviation of the raw output at calibration (nominal LO,
    /// calibrated electronic noise).
    pub fn calibrated_raw_std(&self) -> f64 {
        let eta = self.detector.eta();
        let var_y = expected_var_y(&self.params, &self.channel, eta, self.detector.n_el_cal());
        (eta * self.detector.lo_photons_cal() * var_y).sqrt()
    }

    pub fn run(&self, n: usize, seed: u64) -> Result<PulseBatch> {
        if n == 0 {
            return Err(invalid("n", 0.0, "at least one pulse is required"));
        }
        if !(self.rail_sigmas > 0.0) {
            return Err(invalid("rail_sigmas", self.rail_sigmas, "must be > 0"));
        }
        let mut lo_intensity = self.lo.intensities(self.nominal_lo(), n)?;
        let stabilization = self.stabilizer.as_ref().map(|cfg| stabilize_lo(&lo_intensity, cfg, seed));
        if let Some(s) = &stabilization {
            lo_intensity.clone_from(&s.stabilized);
        }
        if let Some(&bad) = lo_intensity.iter().find(|&&i| !(i > 0.0 && i.is_finite())) {
            return Err(invalid("LO intensity", bad, "must be finite and > 0"));
        }

        let eta = self.detector.eta();
        let t = self.channel.transmission();
        let sd_mod = self.params.modulation_variance().sqrt();
        let sd_channel = (1.0 - t + t * self.channel.excess_noise()).sqrt();
        let sd_el = (eta * self.detector.lo_photons_cal() * self.detector.n_el_cal()).sqrt();
        let (sqrt_t, sqrt_eta, sqrt_loss) = (t.sqrt(), eta.sqrt(), (1.0 - eta).sqrt());
        let rail = self.rail_sigmas * self.calibrated_raw_std();

        let chunks: Vec<Vec<(f64, f64, Quadrature, f64)>> = lo_intensity
            .par_chunks(CHUNK_PULSES)
            .enumerate()
            .map(|(c, lo)| {
                let mut rng = chunk_rng(seed, RngPurpose::Pulses, c as u64);
                lo.iter()
                    .map(|&intensity| {
                        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
                        let x_a = sd_mod * normal();
                        let p_a = sd_mod * normal();
                        let vacuum = normal();
                        let channel_noise = normal();
                        let x_n = normal();
                        let x_el = normal();
                        let theta = if rng.random::<bool>() { Quadrature::P } else { Quadrature::X };
                        let q_a = match theta {
                            Quadrature::X => x_a,
                            Quadrature::P => p_a,
                        } + vacuum;
                        let q_b = sqrt_t * q_a + sd_channel * channel_noise;
                        let raw = (eta * intensity).sqrt() * (sqrt_eta * q_b + sqrt_loss * x_n) + sd_el * x_el;
                        (x_a, p_a, theta, raw)
                    })
                    .collect()
            })
            .collect();

        let mut batch = PulseBatch {
            n,
            seed,
            x_a: Vec::with_capacity(n),
            p_a: Vec::with_capacity(n),
            theta: Vec::with_capacity(n),
            lo_intensity,
            raw_output: Vec::with_capacity(n),
            saturated: Vec::with_capacity(n),
            saturation_rail: rail,
            stabilization,
        };
        for (x_a, p_a, theta, raw) in chunks.into_iter().flatten() {
            batch.x_a.push(x_a);
            batch.p_a.push(p_a);
            batch.theta.push(theta);
            batch.raw_output.push(raw);
            batch.saturated.push(raw.abs() > rail);
        }
        Ok(batch)
    }
}

pub fn simulate_batch(
    params: &ProtocolParams,
    channel: &ChannelModel,
    detector: &DetectorModel,
    lo: &LoProfile,
    n: usize,
    seed: u64,
) -> Result<PulseBatch> {
    Simulation::new(*params, *channel, *detector, lo.clone()).run(n, seed)
}

/// How Bob turns raw outputs into shot-noise units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Normalization {
    /// Divide by the measured intensity of each LO pulse.
    Instantaneous,
    /// Divide by the calibrated LO intensity.
    Calibrated,
}

pub fn normalize_batch(batch: &PulseBatch, detector: &DetectorModel, scheme: Normalization) -> Result<Vec<f64>> {
    let eta = detector.eta();
    match scheme {
        Normalization::Instantaneous => batch
            .raw_output
            .iter()
            .zip(&batch.lo_intensity)
            .map(|(&raw, &intensity)| {
                if intensity > 0.0 {
                    Ok(raw / (eta * intensity).sqrt())
                } else {
                    Err(invalid("LO intensity", intensity, "cannot normalize by a non-positive intensity"))
                }
            })
            .collect(),
        Normalization::Calibrated => {
            let intensity = detector.lo_photons_cal() * detector.lo_gain();
            let scale = (eta * intensity).sqrt();
            Ok(batch.raw_output.iter().map(|&raw| raw / scale).collect())
        }
    }
}

/// `Var(y) = eta T (V - 1) + 1 + eta T eps + N_el` for normalized outputs.
pub fn expected_var_y(params: &ProtocolParams, channel: &ChannelModel, eta: f64, n_el: f64) -> f64 {
    let et = eta * channel.transmission();
    et * params.modulation_variance() + 1.0 + et * channel.excess_noise() + n_el
}

/// `Cov(x_A, y) = sqrt(eta T) (V - 1)`.
pub fn expected_cov_ay(params: &ProtocolParams, channel: &ChannelModel, eta: f64) -> f64 {
    (eta * channel.transmission()).sqrt() * params.modulation_variance()
}

/// Excess-noise estimate bias when the LO is scaled by `gain`, Bob
/// normalizes per pulse and still assumes the calibrated electronic noise:
/// `-N_el (1 - 1/G) / (eta T)`.
pub fn expected_eps_bias(n_el_cal: f64, gain: f64, eta: f64, transmission: f64) -> f64 {
    -n_el_cal * (1.0 - 1.0 / gain) / (eta * transmission)
}
