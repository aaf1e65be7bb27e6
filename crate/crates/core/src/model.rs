//! Domain types and the Gaussian-state algebra shared by every other module.

use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Calibrated LO photon number per pulse used when none is given.
pub const DEFAULT_LO_PHOTONS: f64 = 1e9;

/// Radicands of the symplectic-eigenvalue formula down to this value are
/// treated as roundoff and clamped to zero.
pub const RADICAND_TOLERANCE: f64 = 1e-9;

/// Symplectic eigenvalues below `1 - PHYSICAL_TOLERANCE` violate the
/// uncertainty principle.
pub const PHYSICAL_TOLERANCE: f64 = 1e-6;

fn ensure(ok: bool, name: &'static str, value: f64, reason: &'static str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(invalid(name, value, reason))
    }
}

/// Alice's side of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolParams {
    v: f64,
    beta: f64,
}

impl ProtocolParams {
    /// `v` is the EPR-state variance (modulation variance + 1), `beta` the
    /// reconciliation efficiency.
    pub fn new(v: f64, beta: f64) -> Result<Self> {
        ensure(v.is_finite() && v >= 1.0, "V", v, "must be finite and >= 1")?;
        ensure(beta > 0.0 && beta <= 1.0, "beta", beta, "must lie in (0, 1]")?;
        Ok(Self { v, beta })
    }

    /// Perfect reconciliation (`beta = 1`).
    pub fn with_variance(v: f64) -> Result<Self> {
        Self::new(v, 1.0)
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Variance of Alice's Gaussian displacement per quadrature.
    pub fn modulation_variance(&self) -> f64 {
        self.v - 1.0
    }
}

/// Lossy, noisy Gaussian channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelModel {
    loss_db: f64,
    transmission: f64,
    excess_noise: f64,
}

impl ChannelModel {
    pub fn from_loss_db(loss_db: f64, excess_noise: f64) -> Result<Self> {
        let transmission = db_to_transmission(loss_db)?;
        Self::checked(loss_db, transmission, excess_noise)
    }

    pub fn from_transmission(transmission: f64, excess_noise: f64) -> Result<Self> {
        let loss_db = transmission_to_db(transmission)?;
        Self::checked(loss_db, transmission, excess_noise)
    }

    fn checked(loss_db: f64, transmission: f64, excess_noise: f64) -> Result<Self> {
        ensure(
            transmission > 0.0,
            "T",
            transmission,
            "transmission underflowed to zero",
        )?;
        ensure(
            excess_noise.is_finite() && excess_noise >= 0.0,
            "epsilon",
            excess_noise,
            "must be finite and >= 0",
        )?;
        Ok(Self {
            loss_db,
            transmission,
            excess_noise,
        })
    }

    /// Same line, different excess noise.
    pub fn with_excess_noise(&self, excess_noise: f64) -> Result<Self> {
        Self::checked(self.loss_db, self.transmission, excess_noise)
    }

    pub fn loss_db(&self) -> f64 {
        self.loss_db
    }

    pub fn transmission(&self) -> f64 {
        self.transmission
    }

    pub fn excess_noise(&self) -> f64 {
        self.excess_noise
    }

    /// Total channel added noise referred to the channel input,
    /// `(1 - T)/T + epsilon`.
    pub fn added_noise(&self) -> f64 {
        (1.0 - self.transmission) / self.transmission + self.excess_noise
    }
}

/// Bob's balanced homodyne detector.
///
/// `n_el_cal` is the normalized electronic noise measured at calibration.
/// The electronic noise variance itself is a detector property, so scaling
/// the LO by `lo_gain` divides the normalized value by the same factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorModel {
    eta: f64,
    n_el_cal: f64,
    lo_gain: f64,
    lo_photons_cal: f64,
}

impl DetectorModel {
    pub fn new(eta: f64, n_el_cal: f64) -> Result<Self> {
        ensure(eta > 0.0 && eta <= 1.0, "eta", eta, "must lie in (0, 1]")?;
        ensure(
            n_el_cal.is_finite() && n_el_cal >= 0.0,
            "N_el",
            n_el_cal,
            "must be finite and >= 0",
        )?;
        Ok(Self {
            eta,
            n_el_cal,
            lo_gain: 1.0,
            lo_photons_cal: DEFAULT_LO_PHOTONS,
        })
    }

    /// Unit efficiency, no electronic noise.
    pub fn ideal() -> Self {
        Self {
            eta: 1.0,
            n_el_cal: 0.0,
            lo_gain: 1.0,
            lo_photons_cal: DEFAULT_LO_PHOTONS,
        }
    }

    pub fn with_lo_gain(mut self, gain: f64) -> Result<Self> {
        ensure(gain.is_finite() && gain > 0.0, "G", gain, "must be finite and > 0")?;
        self.lo_gain = gain;
        Ok(self)
    }

    pub fn with_lo_photons(mut self, photons: f64) -> Result<Self> {
        ensure(
            photons.is_finite() && photons > 0.0,
            "lo_photons_cal",
            photons,
            "must be finite and > 0",
        )?;
        self.lo_photons_cal = photons;
        Ok(self)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn n_el_cal(&self) -> f64 {
        self.n_el_cal
    }

    pub fn lo_gain(&self) -> f64 {
        self.lo_gain
    }

    pub fn lo_photons_cal(&self) -> f64 {
        self.lo_photons_cal
    }

    /// Normalized electronic noise at the current LO gain.
    pub fn effective_n_el(&self) -> f64 {
        self.n_el_cal / self.lo_gain
    }

    /// Detection added noise referred to the detector input,
    /// `(1 - eta)/eta + N_el/eta`.
    pub fn added_noise(&self) -> f64 {
        (1.0 - self.eta) / self.eta + self.effective_n_el() / self.eta
    }
}

/// Noise referred to the channel and detector inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseBudget {
    pub chi_c: f64,
    pub chi_d: f64,
    pub chi_t: f64,
    /// Variance `N` of the EPR state that models the detector noise through a
    /// beam splitter of transmittance `eta`. `None` when `eta = 1`, where the
    /// model is undefined.
    pub epr_noise_variance: Option<f64>,
}

/// Covariance matrix `[[a I, c Z], [c Z, b I]]` of Alice's and Bob's modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoModeCovariance {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TwoModeCovariance {
    /// `a^2 + b^2 - 2 c^2`.
    pub fn delta(&self) -> f64 {
        self.a * self.a + self.b * self.b - 2.0 * self.c * self.c
    }

    /// Square root of the determinant, `ab - c^2`.
    pub fn det_root(&self) -> f64 {
        self.a * self.b - self.c * self.c
    }
}

/// Bob's detection scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Protocol {
    PerfectHomodyne,
    Heterodyne,
    /// Homodyne detection with trusted inefficiency and electronic noise.
    NoisyHomodyne(DetectorModel),
}

pub fn db_to_transmission(loss_db: f64) -> Result<f64> {
    ensure(
        loss_db.is_finite() && loss_db >= 0.0,
        "loss_db",
        loss_db,
        "must be finite and >= 0",
    )?;
    Ok(10f64.powf(-loss_db / 10.0))
}

pub fn transmission_to_db(transmission: f64) -> Result<f64> {
    ensure(
        transmission > 0.0 && transmission <= 1.0,
        "T",
        transmission,
        "must lie in (0, 1]",
    )?;
    // -0.0 for T = 1
    Ok((-10.0 * transmission.log10()).max(0.0))
}

/// `G(x) = (x+1) log2(x+1) - x log2(x)`, the entropy in bits of a thermal
/// state with mean photon number `x`.
pub fn g_entropy(x: f64) -> Result<f64> {
    ensure(x.is_finite() && x >= 0.0, "x", x, "must be finite and >= 0")?;
    Ok(g_unchecked(x))
}

pub(crate) fn g_unchecked(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    ((x + 1.0) * x.ln_1p() - x * x.ln()) / std::f64::consts::LN_2
}

pub(crate) fn check_physical(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 1.0 - PHYSICAL_TOLERANCE {
        Ok(())
    } else {
        Err(Error::Unphysical {
            detail: format!("symplectic eigenvalue {lambda} below 1"),
        })
    }
}

pub fn noise_budget(channel: &ChannelModel, detector: &DetectorModel) -> Result<NoiseBudget> {
    let t = channel.transmission();
    ensure(t > 0.0, "T", t, "must be > 0")?;
    let chi_c = channel.added_noise();
    let chi_d = detector.added_noise();
    let eta = detector.eta();
    let epr_noise_variance = (eta < 1.0).then(|| 1.0 + detector.effective_n_el() / (1.0 - eta));
    Ok(NoiseBudget {
        chi_c,
        chi_d,
        chi_t: chi_c + chi_d / t,
        epr_noise_variance,
    })
}

/// Entanglement-based covariance matrix after the channel:
/// `a = V`, `b = T(V + chi_C)`, `c = sqrt(T(V^2 - 1))`.
pub fn covariance_from_link(params: &ProtocolParams, channel: &ChannelModel) -> TwoModeCovariance {
    let v = params.v();
    let t = channel.transmission();
    TwoModeCovariance {
        a: v,
        b: t * (v - 1.0) + 1.0 + t * channel.excess_noise(),
        c: (t * (v * v - 1.0)).sqrt(),
    }
}

/// Symplectic eigenvalues `(lambda_1, lambda_2)`, ascending.
pub fn symplectic_pair(cm: &TwoModeCovariance) -> Result<(f64, f64)> {
    let TwoModeCovariance { a, b, c } = *cm;
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(Error::Unphysical {
            detail: format!("non-finite covariance ({a}, {b}, {c})"),
        });
    }
    // Delta^2 - 4 D^2 factors as (a - b)^2 ((a + b)^2 - 4 c^2).
    let sum = a + b;
    let radicand = (a - b) * (a - b) * (sum * sum - 4.0 * c * c);
    if radicand < -RADICAND_TOLERANCE {
        return Err(Error::Unphysical {
            detail: format!("negative radicand {radicand} for ({a}, {b}, {c})"),
        });
    }
    let delta = cm.delta();
    let det_root = cm.det_root();
    let hi_sq = (delta + radicand.max(0.0).sqrt()) / 2.0;
    if hi_sq <= 0.0 {
        return Err(Error::Unphysical {
            detail: format!("non-positive Delta {delta} for ({a}, {b}, {c})"),
        });
    }
    let hi = hi_sq.sqrt();
    // lambda_1 lambda_2 = D; avoids the cancellation in (Delta - sqrt(...))/2.
    let lo = det_root.abs() / hi;
    check_physical(lo)?;
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn db_conversion_anchors() {
        assert_eq!(db_to_transmission(0.0).unwrap(), 1.0);
        assert_relative_eq!(db_to_transmission(10.0).unwrap(), 0.1, max_relative = 1e-15);
        // mpmath, 40 digits
        assert_relative_eq!(
            db_to_transmission(3.0).unwrap(),
            0.501187233627272,
            max_relative = 1e-14
        );
        assert!(db_to_transmission(-1.0).is_err());
        assert!(db_to_transmission(f64::NAN).is_err());
    }

    #[test]
    fn g_entropy_anchors() {
        assert_eq!(g_entropy(0.0).unwrap(), 0.0);
        assert_relative_eq!(g_entropy(1.0).unwrap(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(g_entropy(0.5).unwrap(), 1.37744375108173, max_relative = 1e-13);
        assert!(g_entropy(-1e-3).is_err());
        assert!(g_entropy(f64::INFINITY).is_err());
    }

    #[test]
    fn noise_budget_noiseless_identity() {
        let ch = ChannelModel::from_transmission(1.0, 0.0).unwrap();
        let nb = noise_budget(&ch, &DetectorModel::ideal()).unwrap();
        assert_eq!((nb.chi_c, nb.chi_d, nb.chi_t), (0.0, 0.0, 0.0));
        assert_eq!(nb.epr_noise_variance, None);
    }

    #[test]
    fn noise_budget_paper_detector() {
        let ch = ChannelModel::from_transmission(0.5, 0.2).unwrap();
        let det = DetectorModel::new(0.606, 0.041).unwrap();
        let nb = noise_budget(&ch, &det).unwrap();
        assert_relative_eq!(nb.chi_c, 1.2, max_relative = 1e-15);
        assert_relative_eq!(nb.chi_d, 0.717821782178218, max_relative = 1e-13);
        assert_relative_eq!(nb.epr_noise_variance.unwrap(), 1.10406091370558, max_relative = 1e-13);
        assert_relative_eq!(nb.chi_t, 1.2 + nb.chi_d / 0.5, max_relative = 1e-15);
    }

    #[test]
    fn eta_one_has_no_epr_variance() {
        let ch = ChannelModel::from_transmission(0.3, 0.1).unwrap();
        let det = DetectorModel::new(1.0, 0.05).unwrap();
        let nb = noise_budget(&ch, &det).unwrap();
        assert_eq!(nb.epr_noise_variance, None);
        assert_relative_eq!(nb.chi_d, 0.05, max_relative = 1e-15);
    }

    #[test]
    fn covariance_anchors() {
        let ch = ChannelModel::from_transmission(0.3, 0.0).unwrap();
        let cm = covariance_from_link(&ProtocolParams::with_variance(1.0).unwrap(), &ch);
        assert_eq!(cm.a, 1.0);
        assert_relative_eq!(cm.b, 1.0, max_relative = 1e-15);
        assert_eq!(cm.c, 0.0);

        let p = ProtocolParams::with_variance(40.0).unwrap();
        let cm = covariance_from_link(&p, &ChannelModel::from_transmission(1.0, 0.0).unwrap());
        assert_eq!((cm.a, cm.b), (40.0, 40.0));
        assert_relative_eq!(cm.c, 1599f64.sqrt(), max_relative = 1e-15);

        let cm = covariance_from_link(&p, &ChannelModel::from_transmission(0.1, 0.0).unwrap());
        assert_eq!(cm.a, 40.0);
        assert_relative_eq!(cm.b, 4.9, max_relative = 1e-14);
        assert_relative_eq!(cm.c, 12.6451571757729, max_relative = 1e-13);
    }

    #[test]
    fn symplectic_anchors() {
        let v: f64 = 40.0;
        let pure = TwoModeCovariance { a: v, b: v, c: (v * v - 1.0).sqrt() };
        let (l1, l2) = symplectic_pair(&pure).unwrap();
        assert!((l1 - 1.0).abs() < 1e-9 && (l2 - 1.0).abs() < 1e-9);

        let product = TwoModeCovariance { a: 3.0, b: 2.0, c: 0.0 };
        assert_eq!(symplectic_pair(&product).unwrap(), (2.0, 3.0));

        let p = ProtocolParams::with_variance(40.0).unwrap();
        let cm = covariance_from_link(&p, &ChannelModel::from_transmission(0.1, 0.0).unwrap());
        let (l1, l2) = symplectic_pair(&cm).unwrap();
        assert!((l1 - 1.0).abs() < 1e-12);
        assert_relative_eq!(l2, 36.1, max_relative = 1e-12);
    }

    #[test]
    fn unphysical_matrix_is_diagnosed() {
        // Correlation larger than any physical state allows.
        let bad = TwoModeCovariance { a: 2.0, b: 1.0, c: 3.0 };
        assert!(matches!(symplectic_pair(&bad), Err(Error::Unphysical { .. })));
        // Below the vacuum.
        let sub_vacuum = TwoModeCovariance { a: 0.5, b: 0.5, c: 0.0 };
        assert!(matches!(symplectic_pair(&sub_vacuum), Err(Error::Unphysical { .. })));
    }

    #[test]
    fn constructors_reject_invalid_input() {
        assert!(ProtocolParams::new(0.9, 1.0).is_err());
        assert!(ProtocolParams::new(10.0, 0.0).is_err());
        assert!(ProtocolParams::new(10.0, 1.1).is_err());
        assert!(ChannelModel::from_transmission(0.0, 0.0).is_err());
        assert!(ChannelModel::from_transmission(1.5, 0.0).is_err());
        assert!(ChannelModel::from_loss_db(3.0, -0.1).is_err());
        assert!(DetectorModel::new(0.0, 0.0).is_err());
        assert!(DetectorModel::new(0.5, -0.01).is_err());
        assert!(DetectorModel::ideal().with_lo_gain(0.0).is_err());
    }

    #[test]
    fn lo_gain_scales_electronic_noise() {
        let det = DetectorModel::new(0.606, 0.041).unwrap().with_lo_gain(4.0).unwrap();
        assert_relative_eq!(det.effective_n_el(), 0.01025, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn g_entropy_increasing_and_nonnegative(x in 0.0f64..1e4, dx in 1e-6f64..10.0) {
            let g0 = g_entropy(x).unwrap();
            let g1 = g_entropy(x + dx).unwrap();
            prop_assert!(g0 >= 0.0);
            prop_assert!(g1 > g0);
        }

        #[test]
        fn physical_links_have_physical_spectra(
            v in 1.0f64..100.0,
            loss in 0.0f64..30.0,
            eps in 0.0f64..1.0,
        ) {
            let p = ProtocolParams::with_variance(v).unwrap();
            let ch = ChannelModel::from_loss_db(loss, eps).unwrap();
            let cm = covariance_from_link(&p, &ch);
            let (l1, l2) = symplectic_pair(&cm).unwrap();
            prop_assert!(l1 >= 1.0 - 1e-9 && l2 >= l1);
            let d = cm.det_root();
            prop_assert!(((l1 * l2 - d) / d).abs() <= 1e-9);
            prop_assert!(((l1 * l1 + l2 * l2 - cm.delta()) / cm.delta()).abs() <= 1e-9);
        }

        #[test]
        fn zero_excess_noise_gives_unit_eigenvalue(v in 1.0f64..100.0, loss in 0.0f64..30.0) {
            let p = ProtocolParams::with_variance(v).unwrap();
            let ch = ChannelModel::from_loss_db(loss, 0.0).unwrap();
            let (l1, _) = symplectic_pair(&covariance_from_link(&p, &ch)).unwrap();
            prop_assert!((l1 - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn epr_variance_reproduces_added_noise(eta in 0.05f64..0.999, n_el in 0.0f64..2.0, gain in 0.1f64..10.0) {
            let det = DetectorModel::new(eta, n_el).unwrap().with_lo_gain(gain).unwrap();
            let ch = ChannelModel::from_transmission(0.5, 0.1).unwrap();
            let nb = noise_budget(&ch, &det).unwrap();
            let n = nb.epr_noise_variance.unwrap();
            prop_assert!(((1.0 - eta) * n / eta - nb.chi_d).abs() <= 1e-12);
        }

        #[test]
        fn db_round_trip(t in 1e-6f64..=1.0) {
            let back = db_to_transmission(transmission_to_db(t).unwrap()).unwrap();
            prop_assert!((back - t).abs() <= 1e-12);
        }
    }
}
