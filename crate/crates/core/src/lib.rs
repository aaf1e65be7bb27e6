//! Analysis toolkit for coherent-state continuous-variable QKD under
//! local-oscillator (LO) manipulation.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: domain types, unit conversions, the Gaussian entropy
//!   function, noise referral and two-mode symplectic spectra.
//! - [`keyrate`]: reverse-reconciliation key rates for perfect homodyne,
//!   heterodyne and noisy (trusted-noise) homodyne detection.
//! - [`optimizer`]: optimal trusted added noise, tolerable excess noise
//!   frontiers and the LO gain that realises a target electronic noise.
//! - [`attack`]: the constant-total-noise deception enabled by LO
//!   fluctuations and the resulting key-rate overestimation.
//! - [`montecarlo`]: pulse-level simulation of the homodyne chain, LO
//!   stabilisation and parameter estimation.
//!
//! All quantities are in shot-noise units (vacuum quadrature variance 1)
//! and bits per pulse unless stated otherwise.

pub mod attack;
pub mod error;
pub mod keyrate;
pub mod model;
pub mod montecarlo;
pub mod numfmt;
pub mod optimizer;

pub use error::{Error, Result};
pub use keyrate::{holevo_bound, key_rate, mutual_information, HolevoBound, KeyRateBreakdown};
pub use model::{
    db_to_transmission, g_entropy, noise_budget, symplectic_pair, transmission_to_db,
    ChannelModel, DetectorModel, NoiseBudget, Protocol, ProtocolParams, TwoModeCovariance,
};
