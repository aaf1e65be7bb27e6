use serde::Serialize;

use super::stats::{block_standard_error, covariance, variance};
use crate::error::{Error, Result};
use crate::model::DetectorModel;

const MAX_BLOCKS: usize = 100;
const MIN_PULSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StandardErrors {
    pub eta_t_hat: f64,
    pub t_hat: f64,
    pub eps_hat: f64,
    pub var_y: f64,
    pub cov_ay: f64,
}

/// Channel parameters Bob infers from matched `(x_A, y)` pairs while
/// trusting the detector model he calibrated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationReport {
    pub eta_t_hat: f64,
    pub t_hat: f64,
    pub eps_hat: f64,
    pub var_a: f64,
    pub var_y: f64,
    pub cov_ay: f64,
    pub eta_assumed: f64,
    pub n_el_assumed: f64,
    pub n_used: usize,
    /// Contiguous blocks used for the standard errors.
    pub blocks: usize,
    pub standard_errors: StandardErrors,
    /// Excess noise re-estimated with the true transmission, when supplied.
    pub eps_hat_known_t: Option<f64>,
    pub eps_hat_known_t_se: Option<f64>,
}

struct Point {
    eta_t: f64,
    eps: f64,
    eps_known_t: Option<f64>,
    var_y: f64,
    cov: f64,
    var_a: f64,
}

fn point(alice: &[f64], bob: &[f64], eta: f64, n_el: f64, known_t: Option<f64>) -> Point {
    let var_a = variance(alice);
    let var_y = variance(bob);
    let cov = covariance(alice, bob);
    // Cov(x_A, y) = sqrt(eta T) Var(x_A)
    let eta_t = (cov / var_a).powi(2);
    let eps_from = |et: f64| (var_y - et * var_a - 1.0 - n_el) / et;
    Point {
        eta_t,
        eps: eps_from(eta_t),
        eps_known_t: known_t.map(|t| eps_from(eta * t)),
        var_y,
        cov,
        var_a,
    }
}

/// Estimates `eta T` and the excess noise from Alice's matched quadratures
/// and Bob's normalized outcomes. Standard errors come from splitting the
/// record into up to 100 contiguous blocks.
pub fn estimate_parameters(
    alice: &[f64],
    bob: &[f64],
    trusted: &DetectorModel,
    true_t_known: Option<f64>,
) -> Result<EstimationReport> {
    if alice.len() != bob.len() {
        return Err(Error::LengthMismatch {
            what: "bob",
            got: bob.len(),
            expected: alice.len(),
        });
    }
    let n = alice.len();
    if n < MIN_PULSES {
        return Err(Error::Degenerate(format!("{n} pulses, need at least {MIN_PULSES}")));
    }
    let eta = trusted.eta();
    let n_el = trusted.effective_n_el();

    let full = point(alice, bob, eta, n_el, true_t_known);
    if !(full.cov > 0.0 && full.var_a > 0.0) {
        return Err(Error::Degenerate(format!(
            "Alice-Bob covariance {} with Alice variance {}",
            full.cov, full.var_a
        )));
    }

    let blocks = (n / 4).clamp(2, MAX_BLOCKS);
    let len = n / blocks;
    let parts: Vec<Point> = (0..blocks)
        .map(|b| {
            let r = b * len..(b + 1) * len;
            point(&alice[r.clone()], &bob[r], eta, n_el, true_t_known)
        })
        .collect();
    let se = |f: fn(&Point) -> f64| {
        let xs: Vec<f64> = parts.iter().map(f).collect();
        block_standard_error(&xs)
    };
    let se_eta_t = se(|p| p.eta_t);
    let standard_errors = StandardErrors {
        eta_t_hat: se_eta_t,
        t_hat: se_eta_t / eta,
        eps_hat: se(|p| p.eps),
        var_y: se(|p| p.var_y),
        cov_ay: se(|p| p.cov),
    };
    let eps_hat_known_t_se = true_t_known.map(|_| se(|p| p.eps_known_t.unwrap_or(f64::NAN)));

    Ok(EstimationReport {
        eta_t_hat: full.eta_t,
        t_hat: full.eta_t / eta,
        eps_hat: full.eps,
        var_a: full.var_a,
        var_y: full.var_y,
        cov_ay: full.cov,
        eta_assumed: eta,
        n_el_assumed: n_el,
        n_used: n,
        blocks,
        standard_errors,
        eps_hat_known_t: full.eps_known_t,
        eps_hat_known_t_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelModel, ProtocolParams};
    use crate::montecarlo::{
        expected_eps_bias, normalize_batch, LoProfile, Normalization, Simulation, StabilizerConfig,
    };

    fn run(gain: f64, stabilize: bool, n: usize, seed: u64) -> EstimationReport {
        let p = ProtocolParams::with_variance(40.0).unwrap();
        let ch = ChannelModel::from_transmission(0.5, 0.2).unwrap();
        let det = DetectorModel::new(0.606, 0.041).unwrap();
        let mut sim = Simulation::new(p, ch, det, LoProfile::Constant(gain));
        if stabilize {
            sim = sim.with_stabilizer(StabilizerConfig::for_detector(&det));
        }
        let batch = sim.run(n, seed).unwrap();
        let y = normalize_batch(&batch, &det, Normalization::Instantaneous).unwrap();
        estimate_parameters(&batch.matched_alice(), &y, &det, Some(0.5)).unwrap()
    }

    #[test]
    fn honest_estimate_is_consistent() {
        let r = run(1.0, false, 1_000_000, 21);
        let se = r.standard_errors;
        assert!((r.eps_hat - 0.2).abs() <= 5.0 * se.eps_hat, "{} +- {}", r.eps_hat, se.eps_hat);
        assert!((r.t_hat - 0.5).abs() <= 5.0 * se.t_hat);
        assert_eq!(r.n_used, 1_000_000);
        assert_eq!(r.blocks, 100);
    }

    #[test]
    fn attack_biases_excess_noise() {
        let r = run(2.0, false, 1_000_000, 22);
        let bias = r.eps_hat - 0.2;
        let want = expected_eps_bias(0.041, 2.0, 0.606, 0.5);
        assert!((bias - want).abs() <= 5.0 * r.standard_errors.eps_hat, "{bias} vs {want}");
        assert!(bias < -10.0 * r.standard_errors.eps_hat);
    }

    #[test]
    fn stabilizer_removes_bias() {
        let r = run(2.0, true, 1_000_000, 23);
        assert!((r.eps_hat - 0.2).abs() <= 5.0 * r.standard_errors.eps_hat);
    }

    #[test]
    fn standard_error_scales_with_sample_size() {
        let small = run(1.0, false, 100_000, 24);
        let large = run(1.0, false, 1_600_000, 25);
        let ratio = small.standard_errors.eps_hat / large.standard_errors.eps_hat;
        // sqrt(16) = 4; block-SE estimates from 100 blocks carry ~7% noise each.
        assert!((ratio - 4.0).abs() < 1.2, "ratio {ratio}");
    }

    #[test]
    fn degenerate_inputs() {
        let det = DetectorModel::new(0.606, 0.041).unwrap();
        let a = vec![1.0, -1.0, 2.0, -2.0, 0.5, -0.5, 1.5, -1.5];
        let y: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!(matches!(estimate_parameters(&a, &y, &det, None), Err(Error::Degenerate(_))));
        assert!(matches!(estimate_parameters(&a, &y[..4], &det, None), Err(Error::LengthMismatch { .. })));
        assert!(estimate_parameters(&a[..3], &y[..3], &det, None).is_err());
    }
}
