//! Deception through LO intensity: raising the LO by a gain `G` divides the
//! normalized electronic noise by `G`. If Eve raises the channel excess
//! noise so that the total noise referred to the channel input stays
//! constant, Bob (still assuming the calibrated electronic noise) sees the
//! same statistics and overestimates his key rate.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::keyrate::key_rate;
use crate::model::{ChannelModel, DetectorModel, Protocol, ProtocolParams};

/// Excess noise and normalized electronic noise, both in SNU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoisePair {
    pub eps: f64,
    pub n_el: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttackScenario {
    /// What Bob assumes.
    pub believed: NoisePair,
    /// What is actually there.
    pub actual: NoisePair,
    pub gain: f64,
    pub eta: f64,
    pub channel: ChannelModel,
}

/// Total noise referred to the channel input,
/// `(1 - eta T)/(eta T) + eps + N_el/(eta T)`.
pub fn total_noise(pair: NoisePair, eta: f64, transmission: f64) -> f64 {
    let et = eta * transmission;
    (1.0 - et) / et + pair.eps + pair.n_el / et
}

/// Scenario in which a gain `G >= 1` on the LO lowers the electronic noise
/// to `n_el_cal / G` and the excess noise rises by exactly the amount hidden.
///
/// The excess noise stored in `channel` is ignored; `base_eps` is used.
pub fn constant_total_noise_scenario(
    base_eps: f64,
    n_el_cal: f64,
    eta: f64,
    channel: &ChannelModel,
    gain: f64,
) -> Result<AttackScenario> {
    if !(gain >= 1.0 && gain.is_finite()) {
        return Err(invalid("G", gain, "must be finite and >= 1 for a constant-total-noise scenario"));
    }
    // Validates eta and n_el_cal.
    DetectorModel::new(eta, n_el_cal)?;
    let channel = channel.with_excess_noise(base_eps)?;
    let et = eta * channel.transmission();
    let actual = NoisePair {
        eps: base_eps + n_el_cal * (1.0 - 1.0 / gain) / et,
        n_el: n_el_cal / gain,
    };
    Ok(AttackScenario {
        believed: NoisePair {
            eps: base_eps,
            n_el: n_el_cal,
        },
        actual,
        gain,
        eta,
        channel,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateGap {
    pub k_believed: f64,
    pub k_true: f64,
    /// `k_believed - k_true`.
    pub gap: f64,
}

fn noisy_rate(pair: NoisePair, eta: f64, channel: &ChannelModel, params: &ProtocolParams) -> Result<f64> {
    let det = DetectorModel::new(eta, pair.n_el)?;
    let ch = channel.with_excess_noise(pair.eps)?;
    Ok(key_rate(&Protocol::NoisyHomodyne(det), params, &ch)?.k_raw)
}

/// Realistic-model key rates Bob believes in and actually gets.
pub fn rate_gap(scenario: &AttackScenario, params: &ProtocolParams) -> Result<RateGap> {
    let k_believed = noisy_rate(scenario.believed, scenario.eta, &scenario.channel, params)?;
    let k_true = noisy_rate(scenario.actual, scenario.eta, &scenario.channel, params)?;
    Ok(RateGap {
        k_believed,
        k_true,
        gap: k_believed - k_true,
    })
}
