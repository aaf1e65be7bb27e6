use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cvqkd_lab_cli::config::{parse_config, parse_switch, LoSpec};
use cvqkd_lab_cli::{execute, CliError, Format, LossRange, Overrides, RunConfig, Scenario};

const THREADS_ENV: &str = "CVQKD_LAB_THREADS";

#[derive(Parser)]
#[command(name = "cvqkd-lab", version, about = "CV-QKD key rates, trusted-noise optimization and LO-attack experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Noisy-homodyne key rate for three electronic-noise levels
    Fig1a(RunArgs),
    /// True and believed key rates under the constant-total-noise attack
    Fig1b(RunArgs),
    /// Tolerable excess noise per protocol
    Fig3(RunArgs),
    /// Optimal trusted noise, its key rate and the LO gain realising it
    Fig4(RunArgs),
    /// Key rates of all three protocols over a loss range
    Sweep(RunArgs),
    /// Monte Carlo estimation under a constant LO gain
    McAttack(RunArgs),
    /// Monte Carlo estimation with per-pulse LO stabilisation
    McStabilize(RunArgs),
    /// Monte Carlo moments against the analytic model
    McValidate(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat `key = value` file; flags override its values
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Alice's variance V in SNU (modulation + 1)
    #[arg(long)]
    v: Option<f64>,
    /// Reconciliation efficiency
    #[arg(long)]
    beta: Option<f64>,
    /// Detector efficiency
    #[arg(long)]
    eta: Option<f64>,
    /// Calibrated electronic noise in SNU
    #[arg(long)]
    n_el: Option<f64>,
    /// Channel excess noise in SNU
    #[arg(long)]
    eps: Option<f64>,
    /// Loss in dB: START:STOP:STEP or a single value
    #[arg(long, value_name = "RANGE")]
    loss: Option<LossRange>,
    /// LO gain
    #[arg(long)]
    gain: Option<f64>,
    /// Upper end of the trusted-noise search
    #[arg(long)]
    chi_d_max: Option<f64>,
    /// Monte Carlo pulses
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// constant:G, stochastic:REL[:SEED] or sequence:PATH
    #[arg(long, value_name = "PROFILE")]
    lo_profile: Option<LoSpec>,
    /// LO stabiliser: on or off
    #[arg(long, value_parser = parse_switch, value_name = "on|off")]
    stabilizer: Option<bool>,
    /// Relative noise of the stabiliser's monitor photodiode
    #[arg(long)]
    monitor_noise: Option<f64>,
    /// Also write the raw pulse batch as CSV
    #[arg(long, value_name = "FILE")]
    export_batch: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            v: self.v,
            beta: self.beta,
            eta: self.eta,
            n_el: self.n_el,
            eps: self.eps,
            loss: self.loss,
            gain: self.gain,
            chi_d_max: self.chi_d_max,
            n: self.n,
            seed: self.seed,
            lo_profile: self.lo_profile.clone(),
            stabilizer: self.stabilizer,
            monitor_noise_rel: self.monitor_noise,
            export: self.export_batch.clone(),
            out: self.out.clone(),
            format: self.format,
            ..Overrides::default()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| CliError::Value {
        key: THREADS_ENV.into(),
        message: format!("`{raw}` is not a positive integer"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Value {
            key: THREADS_ENV.into(),
            message: e.to_string(),
        })
}

fn run(scenario: Scenario, args: &RunArgs) -> Result<(), CliError> {
    configure_threads()?;
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Value {
                key: "--config".into(),
                message: format!("cannot read {}: {e}", path.display()),
            })?;
            parse_config(&text, &path.display().to_string())?
        }
        None => Overrides::default(),
    };
    let cfg = RunConfig::resolve(scenario, file.layered_under(args.overrides()))?;
    execute(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scenario, args) = match &cli.command {
        Command::Fig1a(a) => (Scenario::Fig1a, a),
        Command::Fig1b(a) => (Scenario::Fig1b, a),
        Command::Fig3(a) => (Scenario::Fig3, a),
        Command::Fig4(a) => (Scenario::Fig4, a),
        Command::Sweep(a) => (Scenario::Sweep, a),
        Command::McAttack(a) => (Scenario::McAttack, a),
        Command::McStabilize(a) => (Scenario::McStabilize, a),
        Command::McValidate(a) => (Scenario::McValidate, a),
    };
    match run(scenario, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvqkd-lab {scenario}: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
