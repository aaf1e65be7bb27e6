//! Trusted-noise optimisation.
//!
//! Adding trusted Gaussian noise `chi_D` to Bob's data hurts Eve more than
//! Bob on noisy channels. This module finds the best `chi_D` for a channel,
//! the largest excess noise each protocol tolerates, and the LO gain that
//! turns the optimal noise into a detector setting.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::keyrate::{key_rate, key_rate_with_added_noise};
use crate::model::{ChannelModel, DetectorModel, Protocol, ProtocolParams};

pub const DEFAULT_CHI_D_MAX: f64 = 100.0;
/// Absolute location tolerance of the optimal added noise.
pub const CHI_D_TOLERANCE: f64 = 1e-6;
/// Improvements over `chi_D = 0` at or below this are ignored.
pub const TIE_BREAK_BITS: f64 = 1e-9;
pub const DEFAULT_EPS_CAP: f64 = 10.0;
/// LO gain beyond which the detector is expected to saturate.
pub const MAX_LO_GAIN: f64 = 10.0;

const GRID_POINTS: usize = 64;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AddedNoiseOptimum {
    pub chi_d: f64,
    pub key_rate: f64,
    pub key_rate_at_zero: f64,
    /// Every `(chi_D, K)` evaluated by the search.
    pub trace: Vec<(f64, f64)>,
}

/// Search grid on `[0, chi_d_max]`: zero, 32 logarithmic points from
/// `1e-6 chi_d_max` to `chi_d_max`, and 31 interior linear points.
pub fn search_grid(chi_d_max: f64) -> Vec<f64> {
    let log_n = 32;
    let lin_n = GRID_POINTS - 1 - log_n;
    let mut grid = Vec::with_capacity(GRID_POINTS);
    grid.push(0.0);
    for i in 0..log_n {
        let e = -6.0 + 6.0 * i as f64 / (log_n - 1) as f64;
        grid.push(chi_d_max * 10f64.powf(e));
    }
    for k in 1..=lin_n {
        grid.push(chi_d_max * k as f64 / (lin_n + 1) as f64);
    }
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    grid
}

pub fn optimal_added_noise(
    params: &ProtocolParams,
    channel: &ChannelModel,
    chi_d_max: f64,
) -> Result<AddedNoiseOptimum> {
    if !(chi_d_max.is_finite() && chi_d_max > 0.0) {
        return Err(invalid("chi_d_max", chi_d_max, "must be finite and > 0"));
    }
    let mut trace = Vec::with_capacity(GRID_POINTS + 48);
    let eval = |chi: f64, trace: &mut Vec<(f64, f64)>| -> Result<f64> {
        let k = key_rate_with_added_noise(params, channel, chi)?.k_raw;
        trace.push((chi, k));
        Ok(k)
    };

    let grid = search_grid(chi_d_max);
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, &chi) in grid.iter().enumerate() {
        let k = eval(chi, &mut trace)?;
        if k > best.1 {
            best = (i, k);
        }
    }
    let key_rate_at_zero = trace[0].1;

    // Refine between the neighbours of the best grid point.
    let lo = grid[best.0.saturating_sub(1)];
    let hi = grid[(best.0 + 1).min(grid.len() - 1)];
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval(x1, &mut trace)?;
    let mut f2 = eval(x2, &mut trace)?;
    while b - a > CHI_D_TOLERANCE {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1, &mut trace)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2, &mut trace)?;
        }
    }

    let (mut chi_d, mut k_best) = trace
        .iter()
        .copied()
        .fold((0.0, f64::NEG_INFINITY), |acc, (x, k)| if k > acc.1 { (x, k) } else { acc });
    if k_best - key_rate_at_zero <= TIE_BREAK_BITS {
        chi_d = 0.0;
        k_best = key_rate_at_zero;
    }
    Ok(AddedNoiseOptimum {
        chi_d,
        key_rate: k_best,
        key_rate_at_zero,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontierOptions {
    pub chi_d_max: f64,
    pub eps_cap: f64,
    /// A root counts as converged when `|K| <= rate_tol` there.
    pub rate_tol: f64,
    /// Bisection runs until the bracket is narrower than this. The rate is
    /// not used as a stopping rule: with large trusted noise it is nearly
    /// flat in the excess noise.
    pub eps_tol: f64,
    pub max_iterations: usize,
}

impl Default for FrontierOptions {
    fn default() -> Self {
        Self {
            chi_d_max: DEFAULT_CHI_D_MAX,
            eps_cap: DEFAULT_EPS_CAP,
            rate_tol: 1e-6,
            eps_tol: 1e-13,
            max_iterations: 200,
        }
    }
}

/// Key rate evaluated at a fixed excess noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignWitness {
    pub eps: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub loss_db: f64,
    pub eps_max: f64,
    /// Added noise at the root; zero for protocols without trusted noise.
    pub chi_d_star: f64,
    pub rate_at_root: f64,
    pub converged: bool,
    pub iterations: usize,
    /// No key even without excess noise.
    pub no_key: bool,
    /// Rates at `0.999 eps_max` and `1.001 eps_max`.
    pub below: Option<SignWitness>,
    pub above: Option<SignWitness>,
}

impl FrontierPoint {
    /// Positive rate just below the root and negative just above it.
    pub fn bracket_verified(&self) -> bool {
        match (self.below, self.above) {
            (Some(b), Some(a)) => b.rate > 0.0 && a.rate < 0.0,
            _ => false,
        }
    }
}

/// Largest excess noise with a non-negative key rate at `loss_db`.
///
/// With `optimize_chi_d` and a noisy-homodyne protocol the rate is maximised
/// over the trusted added noise at every trial excess noise; otherwise the
/// protocol's own detector is used.
pub fn tolerable_excess_noise(
    protocol: &Protocol,
    params: &ProtocolParams,
    loss_db: f64,
    optimize_chi_d: bool,
    opts: &FrontierOptions,
) -> Result<FrontierPoint> {
    let base = ChannelModel::from_loss_db(loss_db, 0.0)?;
    let optimize = optimize_chi_d && matches!(protocol, Protocol::NoisyHomodyne(_));
    let rate = |eps: f64| -> Result<(f64, f64)> {
        let ch = base.with_excess_noise(eps)?;
        if optimize {
            let opt = optimal_added_noise(params, &ch, opts.chi_d_max)?;
            Ok((opt.key_rate, opt.chi_d))
        } else {
            let chi = match protocol {
                Protocol::NoisyHomodyne(det) => det.added_noise(),
                _ => 0.0,
            };
            Ok((key_rate(protocol, params, &ch)?.k_raw, chi))
        }
    };

    let (k0, chi0) = rate(0.0)?;
    if k0 <= 0.0 {
        return Ok(FrontierPoint {
            loss_db,
            eps_max: 0.0,
            chi_d_star: chi0,
            rate_at_root: k0,
            converged: true,
            iterations: 0,
            no_key: true,
            below: None,
            above: None,
        });
    }

    let mut iterations = 0;
    let (mut lo, mut hi) = (0.0, 0.05_f64.min(opts.eps_cap));
    loop {
        iterations += 1;
        let (k, _) = rate(hi)?;
        if k < 0.0 {
            break;
        }
        if hi >= opts.eps_cap {
            return Err(Error::NotBracketed {
                lo: 0.0,
                hi,
                f_lo: k0,
                f_hi: k,
            });
        }
        lo = hi;
        hi = (2.0 * hi).min(opts.eps_cap);
    }

    let mut root = None;
    while iterations < opts.max_iterations {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let (k, chi) = rate(mid)?;
        if k == 0.0 || hi - lo <= opts.eps_tol {
            root = Some((mid, k, chi));
            break;
        }
        if k > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (eps_max, rate_at_root, chi_d_star) = match root {
        Some(r) => r,
        None => {
            let mid = 0.5 * (lo + hi);
            let (k, chi) = rate(mid)?;
            (mid, k, chi)
        }
    };

    let below = SignWitness {
        eps: eps_max * 0.999,
        rate: rate(eps_max * 0.999)?.0,
    };
    let above = SignWitness {
        eps: eps_max * 1.001,
        rate: rate(eps_max * 1.001)?.0,
    };
    Ok(FrontierPoint {
        loss_db,
        eps_max,
        chi_d_star,
        rate_at_root,
        converged: rate_at_root.abs() <= opts.rate_tol,
        iterations,
        no_key: false,
        below: Some(below),
        above: Some(above),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainPlan {
    pub chi_d_star: f64,
    pub n_el_target: f64,
    pub gain: f64,
    /// `gain <= MAX_LO_GAIN`, i.e. the electronic noise is lowered by less
    /// than one order of magnitude.
    pub within_hardware_range: bool,
}

/// LO gain that realises the added noise `chi_d_star` through electronic
/// noise alone, at the detector's fixed efficiency.
pub fn gain_for_target_noise(detector: &DetectorModel, chi_d_star: f64) -> Result<GainPlan> {
    let eta = detector.eta();
    let n_el_target = eta * chi_d_star - (1.0 - eta);
    plan(detector, chi_d_star, n_el_target)
}

/// LO gain that brings the normalized electronic noise to `n_el_target`.
pub fn gain_for_electronic_noise(detector: &DetectorModel, n_el_target: f64) -> Result<GainPlan> {
    let eta = detector.eta();
    let chi_d_star = (1.0 - eta) / eta + n_el_target / eta;
    plan(detector, chi_d_star, n_el_target)
}

fn plan(detector: &DetectorModel, chi_d_star: f64, n_el_target: f64) -> Result<GainPlan> {
    if !(n_el_target > 0.0) {
        return Err(Error::InfeasibleAtFixedEfficiency {
            n_el_target,
            eta: detector.eta(),
        });
    }
    if detector.n_el_cal() <= 0.0 {
        return Err(invalid(
            "N_el",
            detector.n_el_cal(),
            "calibrated electronic noise must be > 0 to be tuned by LO gain",
        ));
    }
    let gain = detector.n_el_cal() / n_el_target;
    Ok(GainPlan {
        chi_d_star,
        n_el_target,
        gain,
        within_hardware_range: gain <= MAX_LO_GAIN,
    })
}
