//! Run configuration. Values are layered: scenario defaults, then a flat
//! `key = value` file, then command-line flags.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::ValueEnum;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Fig1a,
    Fig1b,
    Fig3,
    Fig4,
    Sweep,
    McAttack,
    McStabilize,
    McValidate,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig1a => "fig1a",
            Scenario::Fig1b => "fig1b",
            Scenario::Fig3 => "fig3",
            Scenario::Fig4 => "fig4",
            Scenario::Sweep => "sweep",
            Scenario::McAttack => "mc-attack",
            Scenario::McStabilize => "mc-stabilize",
            Scenario::McValidate => "mc-validate",
        }
    }

    pub fn is_monte_carlo(self) -> bool {
        matches!(self, Scenario::McAttack | Scenario::McStabilize | Scenario::McValidate)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("expected csv or json, got `{s}`")),
        }
    }
}

/// Inclusive loss grid `start, start + step, ...` up to `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl LossRange {
    pub fn single(loss_db: f64) -> Self {
        Self {
            start: loss_db,
            stop: loss_db,
            step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.step.is_finite()) {
            return Err("range bounds must be finite".into());
        }
        if self.start < 0.0 {
            return Err(format!("start {} must be >= 0", self.start));
        }
        if !(self.step > 0.0) {
            return Err(format!("step {} must be > 0", self.step));
        }
        if self.stop < self.start {
            return Err(format!("empty range: stop {} < start {}", self.stop, self.start));
        }
        Ok(())
    }

    /// Grid points, computed as `start + i * step` so rounding does not
    /// accumulate. A stop within 1e-9 steps of the grid is included.
    pub fn points(&self) -> Vec<f64> {
        let span = (self.stop - self.start) / self.step;
        let count = (span + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.start + i as f64 * self.step).collect()
    }

    pub fn is_single(&self) -> bool {
        self.points().len() == 1
    }
}

impl FromStr for LossRange {
    type Err = String;

    /// `start:stop:step` or a single value.
    fn from_str(s: &str) -> Result<Self, String> {
        let num = |part: &str| -> Result<f64, String> {
            part.trim().parse::<f64>().map_err(|_| format!("`{part}` is not a number"))
        };
        let parts: Vec<&str> = s.split(':').collect();
        let range = match parts.as_slice() {
            [x] => LossRange::single(num(x)?),
            [a, b, c] => LossRange {
                start: num(a)?,
                stop: num(b)?,
                step: num(c)?,
            },
            _ => return Err(format!("expected start:stop:step or a single value, got `{s}`")),
        };
        range.validate()?;
        Ok(range)
    }
}

/// LO intensity profile requested for a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum LoSpec {
    Constant { gain: f64 },
    /// Seed defaults to the run seed.
    Stochastic { rel_std: f64, seed: Option<u64> },
    /// File with one relative gain per line.
    Sequence { path: PathBuf },
}

impl FromStr for LoSpec {
    type Err = String;

    /// `constant:G`, `stochastic:REL[:SEED]` or `sequence:PATH`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, rest) = s.split_once(':').ok_or_else(|| format!("expected KIND:ARGS, got `{s}`"))?;
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number"));
        match kind.trim() {
            "constant" => Ok(LoSpec::Constant { gain: num(rest)? }),
            "stochastic" => {
                let (rel, seed) = match rest.split_once(':') {
                    Some((r, sd)) => (
                        num(r)?,
                        Some(sd.trim().parse::<u64>().map_err(|_| format!("`{sd}` is not a seed"))?),
                    ),
                    None => (num(rest)?, None),
                };
                Ok(LoSpec::Stochastic { rel_std: rel, seed })
            }
            "sequence" if !rest.trim().is_empty() => Ok(LoSpec::Sequence {
                path: PathBuf::from(rest.trim()),
            }),
            _ => Err(format!("unknown LO profile `{s}`; use constant:G, stochastic:REL[:SEED] or sequence:PATH")),
        }
    }
}

pub fn parse_switch(s: &str) -> Result<bool, String> {
    match s.trim() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected on or off, got `{s}`")),
    }
}

/// Partially specified settings, as read from a file or from flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub v: Option<f64>,
    pub beta: Option<f64>,
    pub eta: Option<f64>,
    pub n_el: Option<f64>,
    pub eps: Option<f64>,
    pub loss: Option<LossRange>,
    pub gain: Option<f64>,
    pub chi_d_max: Option<f64>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub lo_profile: Option<LoSpec>,
    pub stabilizer: Option<bool>,
    pub tap_fraction: Option<f64>,
    pub stabilizer_gain_min: Option<f64>,
    pub stabilizer_gain_max: Option<f64>,
    pub monitor_noise_rel: Option<f64>,
    pub export: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

macro_rules! take_newer {
    ($base:ident, $top:ident; $($field:ident),*) => {
        Overrides { $($field: $top.$field.or($base.$field),)* }
    };
}

impl Overrides {
    /// Fields set in `top` win.
    pub fn layered_under(self, top: Overrides) -> Overrides {
        let base = self;
        take_newer!(base, top; v, beta, eta, n_el, eps, loss, gain, chi_d_max, n, seed,
            lo_profile, stabilizer, tap_fraction, stabilizer_gain_min, stabilizer_gain_max,
            monitor_noise_rel, export, out, format)
    }
}

/// Keys accepted in a configuration file.
pub const KNOWN_KEYS: &[&str] = &[
    "v",
    "beta",
    "eta",
    "n_el",
    "eps",
    "loss_db_range",
    "loss_db_range.start",
    "loss_db_range.stop",
    "loss_db_range.step",
    "gain",
    "chi_d_max",
    "mc.n",
    "mc.seed",
    "mc.lo_profile",
    "mc.stabilizer",
    "mc.stabilizer.tap_fraction",
    "mc.stabilizer.gain_min",
    "mc.stabilizer.gain_max",
    "mc.stabilizer.monitor_noise_rel",
    "mc.export",
    "out",
    "format",
];

/// Parses `key = value` lines. `#` starts a comment; blank lines are
/// skipped. `origin` names the source in error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<Overrides, CliError> {
    let mut o = Overrides::default();
    let mut range_parts: [Option<f64>; 3] = [None; 3];
    let mut range_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |key: &str, message: String| CliError::ConfigFile {
            origin: origin.to_string(),
            line: line_no,
            key: key.to_string(),
            message,
        };
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(line, "expected `key = value`".into()));
        };
        let (key, value) = (key.trim(), value.trim());
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        let float = |v: &str| v.parse::<f64>().map_err(|_| err(key, format!("`{v}` is not a number")));
        let integer = |v: &str| {
            v.replace('_', "")
                .parse::<u64>()
                .map_err(|_| err(key, format!("`{v}` is not a non-negative integer")))
        };
        match key {
            "v" => o.v = Some(float(value)?),
            "beta" => o.beta = Some(float(value)?),
            "eta" => o.eta = Some(float(value)?),
            "n_el" => o.n_el = Some(float(value)?),
            "eps" => o.eps = Some(float(value)?),
            "gain" => o.gain = Some(float(value)?),
            "chi_d_max" => o.chi_d_max = Some(float(value)?),
            "loss_db_range" => {
                o.loss = Some(value.parse().map_err(|m| err(key, m))?);
                range_parts = [None; 3];
            }
            "loss_db_range.start" | "loss_db_range.stop" | "loss_db_range.step" => {
                let slot = match key {
                    "loss_db_range.start" => 0,
                    "loss_db_range.stop" => 1,
                    _ => 2,
                };
                range_parts[slot] = Some(float(value)?);
                range_line = line_no;
            }
            "mc.n" => o.n = Some(integer(value)? as usize),
            "mc.seed" => o.seed = Some(integer(value)?),
            "mc.lo_profile" => o.lo_profile = Some(value.parse().map_err(|m| err(key, m))?),
            "mc.stabilizer" => o.stabilizer = Some(parse_switch(value).map_err(|m| err(key, m))?),
            "mc.stabilizer.tap_fraction" => o.tap_fraction = Some(float(value)?),
            "mc.stabilizer.gain_min" => o.stabilizer_gain_min = Some(float(value)?),
            "mc.stabilizer.gain_max" => o.stabilizer_gain_max = Some(float(value)?),
            "mc.stabilizer.monitor_noise_rel" => o.monitor_noise_rel = Some(float(value)?),
            "mc.export" => o.export = Some(PathBuf::from(value)),
            "out" => o.out = Some(PathBuf::from(value)),
            "format" => o.format = Some(value.parse().map_err(|m| err(key, m))?),
            _ => return Err(err(key, "unknown key".into())),
        }
    }

    if range_parts.iter().any(Option::is_some) {
        let range_err = |message: String| CliError::ConfigFile {
            origin: origin.to_string(),
            line: range_line,
            key: "loss_db_range".into(),
            message,
        };
        let range = match range_parts {
            [Some(start), Some(stop), Some(step)] => LossRange { start, stop, step },
            // A lone start is a single loss value.
            [Some(start), None, None] => LossRange::single(start),
            _ => return Err(range_err("set start, stop and step together".into())),
        };
        range.validate().map_err(range_err)?;
        o.loss = Some(range);
    }
    Ok(o)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilizerSettings {
    pub enabled: bool,
    pub tap_fraction: f64,
    pub gain_min: f64,
    pub gain_max: f64,
    pub monitor_noise_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSettings {
    pub n: usize,
    pub seed: u64,
    pub lo_profile: LoSpec,
    pub stabilizer: StabilizerSettings,
    pub export: Option<PathBuf>,
}

/// Fully resolved configuration for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub v: f64,
    pub beta: f64,
    pub eta: f64,
    pub n_el: f64,
    pub eps: f64,
    pub loss: LossRange,
    pub gain: f64,
    pub chi_d_max: f64,
    pub mc: McSettings,
    pub out: Option<PathBuf>,
    pub format: Format,
}

fn default_loss(s: Scenario) -> LossRange {
    let r = |start, stop, step| LossRange { start, stop, step };
    match s {
        Scenario::Fig1a => r(0.0, 10.0, 0.25),
        Scenario::Fig1b => r(0.0, 6.0, 0.25),
        Scenario::Fig3 => r(0.0, 20.0, 0.5),
        Scenario::Fig4 => r(0.0, 25.0, 0.5),
        Scenario::Sweep => r(0.0, 30.0, 1.0),
        // T = 1/2
        _ => LossRange::single(10.0 * 2f64.log10()),
    }
}

impl RunConfig {
    pub fn resolve(scenario: Scenario, settings: Overrides) -> Result<Self, CliError> {
        let o = settings;
        let eps_default = if scenario == Scenario::Fig4 { 0.25 } else { 0.2 };
        let gain_default = match scenario {
            Scenario::McAttack | Scenario::McStabilize => 2.0,
            _ => 1.0,
        };
        let gain = o.gain.unwrap_or(gain_default);
        let cfg = RunConfig {
            scenario,
            v: o.v.unwrap_or(40.0),
            beta: o.beta.unwrap_or(1.0),
            eta: o.eta.unwrap_or(0.606),
            n_el: o.n_el.unwrap_or(0.041),
            eps: o.eps.unwrap_or(eps_default),
            loss: o.loss.unwrap_or_else(|| default_loss(scenario)),
            gain,
            chi_d_max: o.chi_d_max.unwrap_or(cvqkd_lab::optimizer::DEFAULT_CHI_D_MAX),
            mc: McSettings {
                n: o.n.unwrap_or(1_000_000),
                seed: o.seed.unwrap_or(1),
                lo_profile: o.lo_profile.unwrap_or(LoSpec::Constant { gain }),
                stabilizer: StabilizerSettings {
                    enabled: o.stabilizer.unwrap_or(scenario == Scenario::McStabilize),
                    tap_fraction: o.tap_fraction.unwrap_or(0.01),
                    gain_min: o.stabilizer_gain_min.unwrap_or(0.01),
                    gain_max: o.stabilizer_gain_max.unwrap_or(100.0),
                    monitor_noise_rel: o.monitor_noise_rel.unwrap_or(0.0),
                },
                export: o.export,
            },
            out: o.out,
            format: o.format.unwrap_or(Format::Csv),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, message: &str| {
            Err(CliError::Value {
                key: key.to_string(),
                message: message.to_string(),
            })
        };
        let finite = [
            ("v", self.v),
            ("beta", self.beta),
            ("eta", self.eta),
            ("n_el", self.n_el),
            ("eps", self.eps),
            ("gain", self.gain),
            ("chi_d_max", self.chi_d_max),
        ];
        if let Some((key, _)) = finite.iter().find(|(_, x)| !x.is_finite()) {
            return bad(key, "must be finite");
        }
        if self.v < 1.0 {
            return bad("v", "must be >= 1");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta", "must lie in (0, 1]");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta", "must lie in (0, 1]");
        }
        if self.n_el < 0.0 {
            return bad("n_el", "must be >= 0");
        }
        if self.eps < 0.0 {
            return bad("eps", "must be >= 0");
        }
        if self.gain <= 0.0 {
            return bad("gain", "must be > 0");
        }
        if self.chi_d_max <= 0.0 {
            return bad("chi_d_max", "must be > 0");
        }
        if let Err(m) = self.loss.validate() {
            return bad("loss_db_range", &m);
        }
        if self.scenario.is_monte_carlo() {
            if !self.loss.is_single() {
                return bad("loss_db_range", "Monte Carlo scenarios take a single loss value");
            }
            if self.mc.n == 0 {
                return bad("mc.n", "must be >= 1");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_range_forms() {
        let r: LossRange = "0:20:0.5".parse().unwrap();
        assert_eq!(r.points().len(), 41);
        assert_eq!(*r.points().last().unwrap(), 20.0);
        let r: LossRange = "0:10:0.25".parse().unwrap();
        assert_eq!(r.points().len(), 41);
        let s: LossRange = "3.5".parse().unwrap();
        assert_eq!(s.points(), vec![3.5]);
        assert!("1:0:0.5".parse::<LossRange>().is_err());
        assert!("0:1:0".parse::<LossRange>().is_err());
        assert!("0:1".parse::<LossRange>().is_err());
        assert!("a:1:1".parse::<LossRange>().is_err());
    }

    #[test]
    fn lo_profiles() {
        assert_eq!("constant:2".parse::<LoSpec>().unwrap(), LoSpec::Constant { gain: 2.0 });
        assert_eq!(
            "stochastic:0.05:9".parse::<LoSpec>().unwrap(),
            LoSpec::Stochastic { rel_std: 0.05, seed: Some(9) }
        );
        assert_eq!(
            "stochastic:0.05".parse::<LoSpec>().unwrap(),
            LoSpec::Stochastic { rel_std: 0.05, seed: None }
        );
        assert!("sequence:".parse::<LoSpec>().is_err());
        assert!("pulsed:2".parse::<LoSpec>().is_err());
    }

    #[test]
    fn file_parsing() {
        let text = "# attack run\nv = 40\nmc.n = 1_000_000\nmc.seed = 7 # trailing\n\
                    loss_db_range.start = 0\nloss_db_range.stop = 6\nloss_db_range.step = 0.25\n\
                    mc.stabilizer = on\nformat = \"json\"\n";
        let o = parse_config(text, "run.cfg").unwrap();
        assert_eq!(o.v, Some(40.0));
        assert_eq!(o.n, Some(1_000_000));
        assert_eq!(o.seed, Some(7));
        assert_eq!(o.loss.unwrap().points().len(), 25);
        assert_eq!(o.stabilizer, Some(true));
        assert_eq!(o.format, Some(Format::Json));
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let e = parse_config("v = 40\n\nmc.sed = 3\n", "run.cfg").unwrap_err();
        match &e {
            CliError::ConfigFile { line, key, .. } => {
                assert_eq!(*line, 3);
                assert_eq!(key, "mc.sed");
            }
            other => panic!("{other:?}"),
        }
        assert!(e.to_string().contains("run.cfg:3"));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn partial_range_rejected() {
        assert!(parse_config("loss_db_range.start = 0\nloss_db_range.step = 1\n", "f").is_err());
        let o = parse_config("loss_db_range.start = 3\n", "f").unwrap();
        assert_eq!(o.loss.unwrap().points(), vec![3.0]);
    }

    #[test]
    fn flags_override_file() {
        let file = parse_config("v = 20\neps = 0.1\n", "f").unwrap();
        let flags = Overrides {
            v: Some(40.0),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(Scenario::Fig4, file.layered_under(flags)).unwrap();
        assert_eq!(cfg.v, 40.0);
        assert_eq!(cfg.eps, 0.1);
    }

    #[test]
    fn scenario_defaults() {
        let cfg = RunConfig::resolve(Scenario::McAttack, Overrides::default()).unwrap();
        assert_eq!(cfg.gain, 2.0);
        assert_eq!(cfg.mc.lo_profile, LoSpec::Constant { gain: 2.0 });
        assert!(!cfg.mc.stabilizer.enabled);
        let cfg = RunConfig::resolve(Scenario::McStabilize, Overrides::default()).unwrap();
        assert!(cfg.mc.stabilizer.enabled);
        let cfg = RunConfig::resolve(Scenario::Fig4, Overrides::default()).unwrap();
        assert_eq!(cfg.eps, 0.25);
        assert_eq!(cfg.loss.points().len(), 51);
    }

    #[test]
    fn invalid_values_rejected() {
        let o = Overrides {
            beta: Some(1.5),
            ..Default::default()
        };
        assert!(RunConfig::resolve(Scenario::Fig1a, o).is_err());
        let o = Overrides {
            loss: Some("0:5:1".parse().unwrap()),
            ..Default::default()
        };
        assert!(RunConfig::resolve(Scenario::McValidate, o).is_err());
    }
}
