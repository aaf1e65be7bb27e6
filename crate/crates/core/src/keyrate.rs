//! Reverse-reconciliation secret key rates under collective attacks,
//! `K = beta * I_AB - chi_BE`, for coherent-state protocols.
//!
//! Eve's entropy `S(E) = S(AB)` comes from the two-mode covariance matrix.
//! The conditional entropy `S(E|B)` depends on Bob's measurement:
//!
//! - perfect homodyne: one eigenvalue `sqrt(a (a - c^2/b))`;
//! - heterodyne: one eigenvalue `a - c^2/(b + 1)`;
//! - noisy homodyne with trusted added noise `chi_D`: two eigenvalues from
//!   `A = (b + a D + chi_D Delta)/(b + chi_D)`, `B = D (a + chi_D D)/(b + chi_D)`.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{
    check_physical, covariance_from_link, g_unchecked, ChannelModel, Protocol, ProtocolParams,
    TwoModeCovariance, RADICAND_TOLERANCE,
};

/// Holevo values in `[-CHI_BE_TOLERANCE, 0)` are roundoff at a pure-state
/// boundary and are reported as zero.
pub const CHI_BE_TOLERANCE: f64 = 1e-9;

/// Bob's measurement reduced to what the entropy calculus needs.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Measurement {
    Homodyne,
    Heterodyne,
    /// Homodyne with trusted Gaussian noise `chi_D` referred to the detector input.
    NoisyHomodyne(f64),
}

impl From<&Protocol> for Measurement {
    fn from(p: &Protocol) -> Self {
        match p {
            Protocol::PerfectHomodyne => Measurement::Homodyne,
            Protocol::Heterodyne => Measurement::Heterodyne,
            Protocol::NoisyHomodyne(det) => Measurement::NoisyHomodyne(det.added_noise()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolevoBound {
    pub chi_be: f64,
    pub s_e: f64,
    pub s_e_given_b: f64,
    /// `lambda_1, lambda_2` followed by the conditional eigenvalue(s).
    pub lambdas: Vec<f64>,
    /// Set when a roundoff-negative Holevo value was reported as zero.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyRateBreakdown {
    pub i_ab: f64,
    pub s_e: f64,
    pub s_e_given_b: f64,
    pub chi_be: f64,
    pub beta: f64,
    /// `beta * i_ab - chi_be`, not clamped at zero.
    pub k_raw: f64,
    pub lambdas: Vec<f64>,
    pub chi_be_clamped: bool,
}

impl KeyRateBreakdown {
    pub fn k_clamped(&self) -> f64 {
        self.k_raw.max(0.0)
    }
}

pub fn mutual_information(
    protocol: &Protocol,
    params: &ProtocolParams,
    channel: &ChannelModel,
) -> Result<f64> {
    Ok(mutual_information_for(
        Measurement::from(protocol),
        params,
        channel,
    ))
}

fn mutual_information_for(m: Measurement, params: &ProtocolParams, channel: &ChannelModel) -> f64 {
    let mv = params.modulation_variance();
    let t = channel.transmission();
    let chi_c = channel.added_noise();
    // Each ratio is written as 1 + x so the logarithm stays accurate for small x.
    let bits = |x: f64| x.ln_1p() / std::f64::consts::LN_2;
    match m {
        Measurement::Homodyne => 0.5 * bits(mv / (1.0 + chi_c)),
        Measurement::Heterodyne => bits(t * mv / (t * (1.0 + chi_c) + 1.0)),
        Measurement::NoisyHomodyne(chi_d) => {
            let chi_t = chi_c + chi_d / t;
            0.5 * bits(mv / (1.0 + chi_t))
        }
    }
}

pub fn holevo_bound(
    protocol: &Protocol,
    params: &ProtocolParams,
    channel: &ChannelModel,
) -> Result<HolevoBound> {
    holevo_for(Measurement::from(protocol), params, channel)
}

/// Entropy of a mode whose symplectic eigenvalue satisfies `lambda^2 = 1 + u`.
/// Working with `u` keeps eigenvalues next to 1 accurate, where `G` has an
/// infinite slope.
fn shifted_entropy(u: f64) -> Result<(f64, f64)> {
    let lambda_minus_one = u / (1.0 + (1.0 + u).sqrt());
    check_physical(1.0 + lambda_minus_one)?;
    let x = (lambda_minus_one / 2.0).max(0.0);
    Ok((1.0 + 2.0 * x, g_unchecked(x)))
}

/// Roots `(lo, hi)` of `z^2 - sum z + prod` given the square root of the
/// discriminant.
fn roots_from(sum: f64, prod: f64, disc_root: f64) -> (f64, f64) {
    let hi = (sum + disc_root) / 2.0;
    let lo = if hi > 0.0 { prod / hi } else { 0.0 };
    (lo, hi)
}

fn holevo_for(m: Measurement, params: &ProtocolParams, channel: &ChannelModel) -> Result<HolevoBound> {
    let cm = covariance_from_link(params, channel);
    let TwoModeCovariance { a, b, c } = cm;
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(Error::Unphysical {
            detail: format!("non-finite covariance ({a}, {b}, {c})"),
        });
    }
    let v = params.v();
    let t = channel.transmission();
    let eps = channel.excess_noise();
    let mv = v - 1.0;

    // Everything below is expanded in the link parameters so that no term
    // is a difference of large, nearly equal numbers. With u_i = lambda_i^2 - 1:
    //   u_1 + u_2 = Delta - 2 = (a - b)^2 + 2 (D - 1)
    //   u_1 u_2   = D^2 - Delta + 1 = T eps (V^2 - 1)(2 (1 - T) + T eps)
    let d = v * (1.0 - t) + t + t * v * eps;
    let d_minus_one = mv * (1.0 - t) + t * v * eps;
    let a_minus_b = mv * (1.0 - t) - t * eps;
    let spread = 2.0 * (1.0 - t) + t * eps;
    let sum12 = a_minus_b * a_minus_b + 2.0 * d_minus_one;
    let prod12 = t * eps * (v * v - 1.0) * spread;
    let sum_ab = a + b;
    let disc12 = a_minus_b * a_minus_b * (sum_ab * sum_ab - 4.0 * c * c);
    if disc12 < -RADICAND_TOLERANCE {
        return Err(Error::Unphysical {
            detail: format!("negative radicand {disc12} for ({a}, {b}, {c})"),
        });
    }
    let (u1, u2) = roots_from(sum12, prod12, disc12.max(0.0).sqrt());
    let (l1, g1) = shifted_entropy(u1)?;
    let (l2, g2) = shifted_entropy(u2)?;
    let s_e = g1 + g2;

    let mut lambdas = vec![l1, l2];
    let s_e_given_b = match m {
        Measurement::Homodyne => {
            // lambda_3^2 = a D / b, and a D - b = (V^2 - 1)(1 - T + T eps).
            let (l3, g3) = shifted_entropy((v * v - 1.0) * (1.0 - t + t * eps) / b)?;
            lambdas.push(l3);
            g3
        }
        Measurement::Heterodyne => {
            // lambda_4 = (D + a)/(b + 1), so lambda_4 - 1 = (V - 1)(2 (1 - T) + T eps)/(b + 1).
            let x = mv * spread / (b + 1.0) / 2.0;
            let l4 = 1.0 + 2.0 * x;
            lambdas.push(l4);
            g_unchecked(x.max(0.0))
        }
        Measurement::NoisyHomodyne(chi_d) => {
            // lambda_5^2 + lambda_6^2 = A and (lambda_5 lambda_6)^2 = B, hence
            //   u_5 + u_6 = [(V^2 - 1)(1 - T + T eps) + chi_D (Delta - 2)]/(b + chi_D)
            //   u_5 u_6   = chi_D (D^2 - Delta + 1)/(b + chi_D)
            let denom = b + chi_d;
            let sum56 = ((v * v - 1.0) * (1.0 - t + t * eps) + chi_d * sum12) / denom;
            let prod56 = chi_d * prod12 / denom;
            let disc56 = sum56 * sum56 - 4.0 * prod56;
            if disc56 < -RADICAND_TOLERANCE * sum56.max(1.0).powi(2) {
                let big_a = 2.0 + sum56;
                let big_b = (1.0 + sum56 + prod56).max(0.0);
                return Err(Error::Unphysical {
                    detail: format!("conditional radicand {disc56} (A = {big_a}, B = {big_b}, D = {d})"),
                });
            }
            let (u5, u6) = roots_from(sum56, prod56, disc56.max(0.0).sqrt());
            let (l5, g5) = shifted_entropy(u5)?;
            let (l6, g6) = shifted_entropy(u6)?;
            lambdas.push(l5);
            lambdas.push(l6);
            g5 + g6
        }
    };

    let raw = s_e - s_e_given_b;
    if raw < -CHI_BE_TOLERANCE {
        return Err(Error::Unphysical {
            detail: format!("negative Holevo bound {raw}"),
        });
    }
    Ok(HolevoBound {
        chi_be: raw.max(0.0),
        s_e,
        s_e_given_b,
        lambdas,
        clamped: raw < 0.0,
    })
}

pub fn key_rate(
    protocol: &Protocol,
    params: &ProtocolParams,
    channel: &ChannelModel,
) -> Result<KeyRateBreakdown> {
    breakdown(Measurement::from(protocol), params, channel)
}

/// Noisy-homodyne key rate parameterised directly by the trusted added
/// noise `chi_D` instead of a detector model.
pub fn key_rate_with_added_noise(
    params: &ProtocolParams,
    channel: &ChannelModel,
    chi_d: f64,
) -> Result<KeyRateBreakdown> {
    if !(chi_d.is_finite() && chi_d >= 0.0) {
        return Err(invalid("chi_D", chi_d, "must be finite and >= 0"));
    }
    breakdown(Measurement::NoisyHomodyne(chi_d), params, channel)
}

fn breakdown(m: Measurement, params: &ProtocolParams, channel: &ChannelModel) -> Result<KeyRateBreakdown> {
    let i_ab = mutual_information_for(m, params, channel);
    let hb = holevo_for(m, params, channel)?;
    let beta = params.beta();
    Ok(KeyRateBreakdown {
        i_ab,
        s_e: hb.s_e,
        s_e_given_b: hb.s_e_given_b,
        chi_be: hb.chi_be,
        beta,
        k_raw: beta * i_ab - hb.chi_be,
        lambdas: hb.lambdas,
        chi_be_clamped: hb.clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DetectorModel;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(v: f64) -> ProtocolParams {
        ProtocolParams::with_variance(v).unwrap()
    }

    fn all_protocols() -> [Protocol; 3] {
        [
            Protocol::PerfectHomodyne,
            Protocol::Heterodyne,
            Protocol::NoisyHomodyne(DetectorModel::new(0.606, 0.041).unwrap()),
        ]
    }

    // Expected values below come from a 40-digit mpmath evaluation of the
    // same closed forms, kept outside the crate.

    #[test]
    fn homodyne_information_identity_channel() {
        let ch = ChannelModel::from_transmission(1.0, 0.0).unwrap();
        let i = mutual_information(&Protocol::PerfectHomodyne, &params(40.0), &ch).unwrap();
        assert_relative_eq!(i, 2.66096404744368, max_relative = 1e-13);
    }

    #[test]
    fn no_modulation_no_information() {
        let ch = ChannelModel::from_loss_db(7.0, 0.3).unwrap();
        for p in all_protocols() {
            assert_eq!(mutual_information(&p, &params(1.0), &ch).unwrap(), 0.0);
            let k = key_rate(&p, &params(1.0), &ch).unwrap();
            assert!(k.k_raw <= 0.0);
        }
    }

    #[test]
    fn noisy_homodyne_information_at_3db() {
        let ch = ChannelModel::from_loss_db(3.0, 0.25).unwrap();
        let det = DetectorModel::new(0.606, 0.041).unwrap();
        let i = mutual_information(&Protocol::NoisyHomodyne(det), &params(40.0), &ch).unwrap();
        assert_relative_eq!(i, 1.76833830225232, max_relative = 1e-12);
    }

    #[test]
    fn identity_channel_leaks_nothing() {
        let ch = ChannelModel::from_transmission(1.0, 0.0).unwrap();
        for p in all_protocols() {
            let hb = holevo_bound(&p, &params(40.0), &ch).unwrap();
            assert!(hb.chi_be.abs() <= 1e-9, "{p:?}: {}", hb.chi_be);
        }
    }

    #[test]
    fn homodyne_holevo_at_tenth_transmission() {
        let ch = ChannelModel::from_transmission(0.1, 0.0).unwrap();
        let hb = holevo_bound(&Protocol::PerfectHomodyne, &params(40.0), &ch).unwrap();
        assert_relative_eq!(hb.chi_be, 1.07302250596537, max_relative = 1e-12);
        assert_relative_eq!(hb.lambdas[1], 36.1, max_relative = 1e-12);
        let l3 = (40.0f64 * (40.0 - 159.9 / 4.9)).sqrt();
        assert_relative_eq!(hb.lambdas[2], l3, max_relative = 1e-12);
    }

    #[test]
    fn heterodyne_exact_cancellation() {
        let ch = ChannelModel::from_transmission(1.0, 0.0).unwrap();
        let hb = holevo_bound(&Protocol::Heterodyne, &params(40.0), &ch).unwrap();
        assert!((hb.lambdas[2] - 1.0).abs() < 1e-12);
        assert!(hb.s_e_given_b.abs() < 1e-9);
        assert!(hb.chi_be.abs() < 1e-9);
    }

    #[test]
    fn key_rate_anchors() {
        let ch = ChannelModel::from_transmission(1.0, 0.0).unwrap();
        let k = key_rate(&Protocol::PerfectHomodyne, &params(40.0), &ch).unwrap();
        assert_relative_eq!(k.k_raw, 2.66096404744368, max_relative = 1e-12);

        let ch = ChannelModel::from_loss_db(10.0, 0.0).unwrap();
        let k = key_rate(&Protocol::PerfectHomodyne, &params(40.0), &ch).unwrap();
        assert_relative_eq!(k.k_raw, 0.0733683686485576, max_relative = 1e-10);
    }

    #[test]
    fn negative_rates_are_not_clamped() {
        let ch = ChannelModel::from_loss_db(10.0, 0.5).unwrap();
        let k = key_rate(&Protocol::PerfectHomodyne, &params(40.0), &ch).unwrap();
        assert!(k.k_raw < 0.0);
        assert_eq!(k.k_clamped(), 0.0);
    }

    #[test]
    fn noisy_branch_reports_two_conditional_eigenvalues() {
        let ch = ChannelModel::from_loss_db(5.0, 0.1).unwrap();
        let k = key_rate_with_added_noise(&params(40.0), &ch, 0.7).unwrap();
        assert_eq!(k.lambdas.len(), 4);
        assert!(key_rate_with_added_noise(&params(40.0), &ch, -0.1).is_err());
    }

    #[test]
    fn large_added_noise_hides_everything() {
        let ch = ChannelModel::from_loss_db(5.0, 0.1).unwrap();
        let k = key_rate_with_added_noise(&params(40.0), &ch, 1e9).unwrap();
        assert!(k.i_ab < 1e-6 && k.chi_be < 1e-6);
    }

    #[test]
    fn near_pure_state_holevo() {
        let p = params(40.0);
        let ch = ChannelModel::from_transmission(0.999, 1e-6).unwrap();
        let k = key_rate_with_added_noise(&p, &ch, 0.3).unwrap();
        assert_relative_eq!(k.chi_be, 0.058552039245772961, max_relative = 1e-10);
        assert_relative_eq!(k.k_raw, 2.4178471632754479, max_relative = 1e-12);
        let ch = ChannelModel::from_transmission(1.0, 1e-8).unwrap();
        let k = key_rate_with_added_noise(&p, &ch, 2.0).unwrap();
        assert_relative_eq!(k.chi_be, 2.3323968745864117e-6, max_relative = 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn pure_state_leaks_nothing_for_any_added_noise(chi_d in 0.0f64..1e3, v in 1.0f64..100.0) {
            let ch = ChannelModel::from_transmission(1.0, 0.0).unwrap();
            let k = key_rate_with_added_noise(&params(v), &ch, chi_d).unwrap();
            prop_assert!(k.chi_be.abs() <= 1e-12, "{}", k.chi_be);
        }

        #[test]
        fn noiseless_detector_reduces_to_perfect_homodyne(
            v in 1.0f64..100.0,
            loss in 0.0f64..30.0,
            eps in 0.0f64..1.0,
        ) {
            let ch = ChannelModel::from_loss_db(loss, eps).unwrap();
            let p = params(v);
            let noisy = Protocol::NoisyHomodyne(DetectorModel::ideal());
            let a = key_rate(&noisy, &p, &ch).unwrap();
            let b = key_rate(&Protocol::PerfectHomodyne, &p, &ch).unwrap();
            prop_assert!((a.k_raw - b.k_raw).abs() <= 1e-9, "{} vs {}", a.k_raw, b.k_raw);
        }

        #[test]
        fn breakdown_is_consistent(
            v in 1.0f64..100.0,
            loss in 0.0f64..30.0,
            eps in 0.0f64..1.0,
            beta in 0.5f64..=1.0,
            which in 0usize..3,
        ) {
            let ch = ChannelModel::from_loss_db(loss, eps).unwrap();
            let p = ProtocolParams::new(v, beta).unwrap();
            let k = key_rate(&all_protocols()[which], &p, &ch).unwrap();
            prop_assert_eq!(k.k_raw, beta * k.i_ab - k.chi_be);
            if !k.chi_be_clamped {
                prop_assert!((k.chi_be - (k.s_e - k.s_e_given_b)).abs() <= 1e-12);
            }
            prop_assert!(k.chi_be >= 0.0);
            for l in &k.lambdas {
                prop_assert!(*l >= 1.0 - 1e-9, "lambda {}", l);
            }
        }
    }

    #[test]
    fn key_rate_decreases_with_noise_and_loss() {
        let p = params(40.0);
        for proto in all_protocols() {
            for loss_step in 0..=30 {
                let loss = loss_step as f64;
                let mut prev = f64::INFINITY;
                for eps_step in 0..=20 {
                    let ch = ChannelModel::from_loss_db(loss, eps_step as f64 * 0.05).unwrap();
                    let k = key_rate(&proto, &p, &ch).unwrap().k_raw;
                    assert!(k <= prev + 1e-12, "{proto:?} loss {loss} eps step {eps_step}");
                    prev = k;
                }
            }
            for eps_step in 0..=20 {
                let eps = eps_step as f64 * 0.05;
                let mut prev = f64::INFINITY;
                for loss_step in 0..=60 {
                    let ch = ChannelModel::from_loss_db(loss_step as f64 * 0.5, eps).unwrap();
                    let k = key_rate(&proto, &p, &ch).unwrap().k_raw;
                    // Below zero the rate climbs back towards 0 as T -> 0.
                    if prev > 0.0 {
                        assert!(k <= prev + 1e-12, "{proto:?} eps {eps} loss step {loss_step}");
                    }
                    prev = k;
                }
            }
        }
    }
}
