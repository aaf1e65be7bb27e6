//! Scenario implementations. Each is a pure function of its [`RunConfig`].

use std::fs;

use cvqkd_lab::attack::{constant_total_noise_scenario, rate_gap};
use cvqkd_lab::montecarlo::{
    estimate_parameters, expected_cov_ay, expected_eps_bias, expected_var_y, normalize_batch, EstimationReport,
    LoProfile, Normalization, Simulation, StabilizerConfig,
};
use cvqkd_lab::optimizer::{gain_for_target_noise, optimal_added_noise, tolerable_excess_noise, FrontierOptions};
use cvqkd_lab::{key_rate, ChannelModel, DetectorModel, Protocol, ProtocolParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{LoSpec, RunConfig, Scenario};
use crate::error::CliError;
use crate::output::{Output, Table};

/// LO gains of the three constant-total-noise curves: honest, 8/7 and 2.
pub const ATTACK_GAINS: [f64; 3] = [1.0, 8.0 / 7.0, 2.0];

pub fn run(cfg: &RunConfig) -> Result<Output, CliError> {
    match cfg.scenario {
        Scenario::Fig1a => fig1a(cfg).map(Output::Table),
        Scenario::Fig1b => fig1b(cfg).map(Output::Table),
        Scenario::Fig3 => fig3(cfg).map(Output::Table),
        Scenario::Fig4 => fig4(cfg).map(Output::Table),
        Scenario::Sweep => sweep(cfg).map(Output::Table),
        Scenario::McAttack | Scenario::McStabilize | Scenario::McValidate => monte_carlo(cfg).map(Output::Record),
    }
}

fn params(cfg: &RunConfig) -> Result<ProtocolParams, CliError> {
    Ok(ProtocolParams::new(cfg.v, cfg.beta)?)
}

/// Evaluates `row` at every loss point in parallel, keeping grid order.
fn tabulate<F>(cfg: &RunConfig, columns: &[&str], row: F) -> Result<Table, CliError>
where
    F: Fn(f64) -> Result<Vec<f64>, CliError> + Sync,
{
    let rows: Vec<Vec<f64>> = cfg
        .loss
        .points()
        .par_iter()
        .map(|&loss| {
            let mut r = vec![loss];
            r.extend(row(loss)?);
            Ok(r)
        })
        .collect::<Result<_, CliError>>()?;
    let mut table = Table::new(cfg.scenario.name(), columns);
    for r in rows {
        table.push(r);
    }
    Ok(table)
}

/// Appends the rates clamped at zero after the raw ones.
fn with_clamped(raw: Vec<f64>) -> Vec<f64> {
    let clamped: Vec<f64> = raw.iter().map(|k| k.max(0.0)).collect();
    raw.into_iter().chain(clamped).collect()
}

fn fig1a(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = params(cfg)?;
    let columns = [
        "loss_db",
        "k_nel_0041",
        "k_nel_0359",
        "k_nel_0205",
        "k_nel_0041_clamped",
        "k_nel_0359_clamped",
        "k_nel_0205_clamped",
    ];
    tabulate(cfg, &columns, |loss| {
        let ch = ChannelModel::from_loss_db(loss, cfg.eps)?;
        let rates = ATTACK_GAINS
            .iter()
            .map(|g| {
                let det = DetectorModel::new(cfg.eta, cfg.n_el / g)?;
                Ok(key_rate(&Protocol::NoisyHomodyne(det), &p, &ch)?.k_raw)
            })
            .collect::<Result<Vec<f64>, CliError>>()?;
        Ok(with_clamped(rates))
    })
}

fn fig1b(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = params(cfg)?;
    let columns = [
        "loss_db",
        "k_true_g1",
        "k_true_g87",
        "k_true_g2",
        "k_believed",
        "k_true_g1_clamped",
        "k_true_g87_clamped",
        "k_true_g2_clamped",
        "k_believed_clamped",
    ];
    tabulate(cfg, &columns, |loss| {
        let ch = ChannelModel::from_loss_db(loss, cfg.eps)?;
        let mut rates = Vec::with_capacity(4);
        let mut believed = f64::NAN;
        for g in ATTACK_GAINS {
            let s = constant_total_noise_scenario(cfg.eps, cfg.n_el, cfg.eta, &ch, g)?;
            let gap = rate_gap(&s, &p)?;
            rates.push(gap.k_true);
            believed = gap.k_believed;
        }
        rates.push(believed);
        Ok(with_clamped(rates))
    })
}

fn fig3(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = params(cfg)?;
    let det = DetectorModel::new(cfg.eta, cfg.n_el)?;
    let opts = FrontierOptions {
        chi_d_max: cfg.chi_d_max,
        ..FrontierOptions::default()
    };
    let columns = ["loss_db", "eps_perfect_hom", "eps_heterodyne", "eps_noisy_hom", "chi_d_star_noisy_hom"];
    tabulate(cfg, &columns, |loss| {
        let mut row = Vec::with_capacity(4);
        let mut chi = 0.0;
        for (proto, optimize) in [
            (Protocol::PerfectHomodyne, false),
            (Protocol::Heterodyne, false),
            (Protocol::NoisyHomodyne(det), true),
        ] {
            let point = tolerable_excess_noise(&proto, &p, loss, optimize, &opts)?;
            if !point.converged {
                return Err(CliError::Solver(format!(
                    "tolerable excess noise did not converge at {loss} dB for {proto:?}: |K| = {}",
                    point.rate_at_root.abs()
                )));
            }
            row.push(point.eps_max);
            chi = point.chi_d_star;
        }
        row.push(chi);
        Ok(row)
    })
}

fn fig4(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = params(cfg)?;
    let det = DetectorModel::new(cfg.eta, cfg.n_el)?;
    let columns = [
        "loss_db",
        "k_opt",
        "k_perfect",
        "k_het",
        "chi_d_star",
        "n_el_star",
        "gain_star",
        "k_opt_clamped",
        "k_perfect_clamped",
        "k_het_clamped",
    ];
    tabulate(cfg, &columns, |loss| {
        let ch = ChannelModel::from_loss_db(loss, cfg.eps)?;
        let opt = optimal_added_noise(&p, &ch, cfg.chi_d_max)?;
        let k_perfect = key_rate(&Protocol::PerfectHomodyne, &p, &ch)?.k_raw;
        let k_het = key_rate(&Protocol::Heterodyne, &p, &ch)?.k_raw;
        // No electronic-noise setting realises chi_D* when the efficiency
        // alone already adds more noise.
        let (n_el_star, gain_star) = match gain_for_target_noise(&det, opt.chi_d) {
            Ok(plan) => (plan.n_el_target, plan.gain),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let mut row = vec![opt.key_rate, k_perfect, k_het, opt.chi_d, n_el_star, gain_star];
        row.extend([opt.key_rate, k_perfect, k_het].map(|k| k.max(0.0)));
        Ok(row)
    })
}

fn sweep(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = params(cfg)?;
    let det = DetectorModel::new(cfg.eta, cfg.n_el)?.with_lo_gain(cfg.gain)?;
    let columns = [
        "loss_db",
        "transmission",
        "k_perfect",
        "k_het",
        "k_noisy",
        "k_perfect_clamped",
        "k_het_clamped",
        "k_noisy_clamped",
    ];
    tabulate(cfg, &columns, |loss| {
        let ch = ChannelModel::from_loss_db(loss, cfg.eps)?;
        let rates = [Protocol::PerfectHomodyne, Protocol::Heterodyne, Protocol::NoisyHomodyne(det)]
            .iter()
            .map(|proto| Ok(key_rate(proto, &p, &ch)?.k_raw))
            .collect::<Result<Vec<f64>, CliError>>()?;
        let mut row = vec![ch.transmission()];
        row.extend(with_clamped(rates));
        Ok(row)
    })
}

/// Analytic moments for a constant LO gain `g` at the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub var_y: f64,
    pub cov_ay: f64,
    pub eps_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
    pub transmission: f64,
    pub eps: f64,
    pub lo_profile: LoSpec,
    pub normalization: Normalization,
    pub stabilizer: bool,
    pub report: EstimationReport,
    /// Only for constant LO profiles.
    pub expected: Option<Moments>,
    /// `(estimate - expected) / standard error`.
    pub z_scores: Option<Moments>,
    pub saturated: usize,
    pub stabilizer_clipped: Option<usize>,
    pub stabilizer_max_residual: Option<f64>,
}

impl McSummary {
    /// Flat `(name, value)` view used for CSV.
    pub fn fields(&self) -> Vec<(&'static str, f64)> {
        let r = &self.report;
        let se = &r.standard_errors;
        let nan = f64::NAN;
        let e = self.expected.unwrap_or(Moments {
            var_y: nan,
            cov_ay: nan,
            eps_hat: nan,
        });
        let z = self.z_scores.unwrap_or(e);
        vec![
            ("eta_t_hat", r.eta_t_hat),
            ("t_hat", r.t_hat),
            ("eps_hat", r.eps_hat),
            ("var_a", r.var_a),
            ("var_y", r.var_y),
            ("cov_ay", r.cov_ay),
            ("eta_assumed", r.eta_assumed),
            ("n_el_assumed", r.n_el_assumed),
            ("n_used", r.n_used as f64),
            ("blocks", r.blocks as f64),
            ("se_eta_t_hat", se.eta_t_hat),
            ("se_t_hat", se.t_hat),
            ("se_eps_hat", se.eps_hat),
            ("se_var_y", se.var_y),
            ("se_cov_ay", se.cov_ay),
            ("eps_hat_known_t", r.eps_hat_known_t.unwrap_or(nan)),
            ("se_eps_hat_known_t", r.eps_hat_known_t_se.unwrap_or(nan)),
            ("expected_var_y", e.var_y),
            ("expected_cov_ay", e.cov_ay),
            ("expected_eps_hat", e.eps_hat),
            ("z_var_y", z.var_y),
            ("z_cov_ay", z.cov_ay),
            ("z_eps_hat", z.eps_hat),
            ("saturated", self.saturated as f64),
            ("stabilizer_clipped", self.stabilizer_clipped.map_or(nan, |c| c as f64)),
            ("stabilizer_max_residual", self.stabilizer_max_residual.unwrap_or(nan)),
        ]
    }
}

fn expected_moments(
    params: &ProtocolParams,
    channel: &ChannelModel,
    eta: f64,
    n_el: f64,
    gain: f64,
    scheme: Normalization,
) -> Moments {
    let et = eta * channel.transmission();
    match scheme {
        // Electronic noise is divided by the raised LO; the signal is not.
        Normalization::Instantaneous => Moments {
            var_y: expected_var_y(params, channel, eta, n_el / gain),
            cov_ay: expected_cov_ay(params, channel, eta),
            eps_hat: channel.excess_noise() + expected_eps_bias(n_el, gain, eta, channel.transmission()),
        },
        // Signal and shot noise scale with the LO; Bob's divisor does not.
        Normalization::Calibrated => Moments {
            var_y: gain * (expected_var_y(params, channel, eta, 0.0)) + n_el,
            cov_ay: gain.sqrt() * expected_cov_ay(params, channel, eta),
            eps_hat: channel.excess_noise() + (1.0 - 1.0 / gain) / et,
        },
    }
}

fn read_sequence(path: &std::path::Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>().map_err(|_| CliError::Value {
                key: "mc.lo_profile".into(),
                message: format!("`{l}` in {} is not a number", path.display()),
            })
        })
        .collect()
}

fn monte_carlo(cfg: &RunConfig) -> Result<McSummary, CliError> {
    let p = params(cfg)?;
    let loss = cfg.loss.start;
    let channel = ChannelModel::from_loss_db(loss, cfg.eps)?;
    let det = DetectorModel::new(cfg.eta, cfg.n_el)?;
    let mc = &cfg.mc;

    let (lo, constant_gain) = match &mc.lo_profile {
        LoSpec::Constant { gain } => (LoProfile::Constant(*gain), Some(*gain)),
        LoSpec::Stochastic { rel_std, seed } => (
            LoProfile::Stochastic {
                rel_std: *rel_std,
                seed: seed.unwrap_or(mc.seed),
            },
            None,
        ),
        LoSpec::Sequence { path } => (LoProfile::Sequence(read_sequence(path)?), None),
    };

    let mut sim = Simulation::new(p, channel, det, lo);
    let st = mc.stabilizer;
    if st.enabled {
        let target = sim.nominal_lo();
        sim = sim.with_stabilizer(StabilizerConfig::new(
            st.tap_fraction,
            target,
            st.gain_min,
            st.gain_max,
            st.monitor_noise_rel,
        )?);
    }
    let batch = sim.run(mc.n, mc.seed)?;
    if let Some(path) = &mc.export {
        let file = fs::File::create(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
        batch
            .write_csv(std::io::BufWriter::new(file))
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    }

    let scheme = match cfg.scenario {
        Scenario::McValidate => Normalization::Calibrated,
        _ => Normalization::Instantaneous,
    };
    let y = normalize_batch(&batch, &det, scheme)?;
    let report = estimate_parameters(&batch.matched_alice(), &y, &det, Some(channel.transmission()))?;

    // The stabilizer returns every pulse to the calibrated intensity.
    let effective_gain = if st.enabled { Some(1.0) } else { constant_gain };
    let expected = effective_gain.map(|g| expected_moments(&p, &channel, cfg.eta, cfg.n_el, g, scheme));
    let se = report.standard_errors;
    let z_scores = expected.map(|e| Moments {
        var_y: (report.var_y - e.var_y) / se.var_y,
        cov_ay: (report.cov_ay - e.cov_ay) / se.cov_ay,
        eps_hat: (report.eps_hat - e.eps_hat) / se.eps_hat,
    });
    let stab = batch.stabilization.as_ref();

    Ok(McSummary {
        scenario: cfg.scenario,
        n: mc.n,
        seed: mc.seed,
        transmission: channel.transmission(),
        eps: cfg.eps,
        lo_profile: mc.lo_profile.clone(),
        normalization: scheme,
        stabilizer: st.enabled,
        report,
        expected,
        z_scores,
        saturated: batch.saturated_count(),
        stabilizer_clipped: stab.map(|s| s.clipped),
        stabilizer_max_residual: stab.map(|s| s.residuals.iter().copied().fold(0.0, f64::max)),
    })
}
