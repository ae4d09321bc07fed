//! Command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jumpflow::io::config::SolverConfig;
use jumpflow::io::trajectory::Trajectory;
use jumpflow::run::{self, Setup};
use jumpflow::verify::calibrate::{calibrate, Constants};
use jumpflow::Error;

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_AUDIT: u8 = 3;
const EXIT_NONCONVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(name = "jumpflow", version, about = "Mild solutions of 2D stochastic Navier-Stokes with Poisson jump noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the functional-inequality constants and write them as JSON
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
        /// destination, default `<output>/constants.json`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve and audit one sample path
    Run {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Solve and audit `n_paths` sample paths
    Ensemble {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Re-audit a stored trajectory CSV
    Audit {
        trajectory: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print version and file-format versions
    Version,
}

/// `--config <file>` plus one flag per configuration key; flags override
/// the file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// configuration file of `key = value [unit]` lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// grid size (even)
    #[arg(long)]
    n: Option<String>,
    /// time horizon [s]
    #[arg(long)]
    horizon: Option<String>,
    /// solver step [s]
    #[arg(long)]
    dt: Option<String>,
    /// noise regularity, in (0, 1/4)
    #[arg(long)]
    alpha: Option<String>,
    /// spectral decay exponent of the jump profile
    #[arg(long)]
    gamma: Option<String>,
    /// jump profile amplitude
    #[arg(long)]
    sigma: Option<String>,
    /// jump intensity [1/s]
    #[arg(long)]
    lambda: Option<String>,
    /// mark law: symmetric-two-point, two-point, uniform, truncated-gaussian
    #[arg(long)]
    marks: Option<String>,
    #[arg(long)]
    mark_amplitude: Option<String>,
    #[arg(long)]
    mark_low: Option<String>,
    #[arg(long)]
    mark_high: Option<String>,
    #[arg(long)]
    mark_p_high: Option<String>,
    #[arg(long)]
    mark_mean: Option<String>,
    #[arg(long)]
    mark_std_dev: Option<String>,
    #[arg(long)]
    mark_bound: Option<String>,
    /// seed of the random profile phases
    #[arg(long)]
    phase_seed: Option<String>,
    /// initial datum: zero, taylor-green, random
    #[arg(long)]
    u0: Option<String>,
    #[arg(long)]
    u0_amplitude: Option<String>,
    #[arg(long)]
    u0_seed: Option<String>,
    /// Picard tolerance
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    /// subinterval policy: contraction, theory
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    n_paths: Option<String>,
    /// master seed of the jump paths
    #[arg(long)]
    seed: Option<String>,
    /// snapshot stride in steps, 0 for none
    #[arg(long)]
    stride: Option<String>,
    /// output directory
    #[arg(long)]
    output: Option<String>,
    /// constants file from `calibrate`; calibrated on the fly when absent
    #[arg(long)]
    constants: Option<String>,
    #[arg(long)]
    calibration_seed: Option<String>,
    #[arg(long)]
    calibration_samples: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let flags: [(&str, &Option<String>); 29] = [
            ("n", &self.n),
            ("horizon", &self.horizon),
            ("dt", &self.dt),
            ("alpha", &self.alpha),
            ("gamma", &self.gamma),
            ("sigma", &self.sigma),
            ("lambda", &self.lambda),
            ("marks", &self.marks),
            ("mark_amplitude", &self.mark_amplitude),
            ("mark_low", &self.mark_low),
            ("mark_high", &self.mark_high),
            ("mark_p_high", &self.mark_p_high),
            ("mark_mean", &self.mark_mean),
            ("mark_std_dev", &self.mark_std_dev),
            ("mark_bound", &self.mark_bound),
            ("phase_seed", &self.phase_seed),
            ("u0", &self.u0),
            ("u0_amplitude", &self.u0_amplitude),
            ("u0_seed", &self.u0_seed),
            ("tol", &self.tol),
            ("max_iter", &self.max_iter),
            ("policy", &self.policy),
            ("n_paths", &self.n_paths),
            ("seed", &self.seed),
            ("stride", &self.stride),
            ("output", &self.output),
            ("constants", &self.constants),
            ("calibration_seed", &self.calibration_seed),
            ("calibration_samples", &self.calibration_samples),
        ];
        flags
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }

    fn load(&self) -> Result<SolverConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Failure::config(format!("cannot read {}: {e}", path.display()))
                })?;
                SolverConfig::parse(&text).map_err(Failure::from_config)?
            }
            None => SolverConfig::default(),
        };
        cfg.apply(&self.overrides()).map_err(Failure::from_config)?;
        Ok(cfg)
    }
}

/// An error message with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: String) -> Self {
        Self {
            code: EXIT_CONFIG,
            message,
        }
    }

    fn from_config(e: Error) -> Self {
        Self::config(e.to_string())
    }

    fn audit(message: String) -> Self {
        Self {
            code: EXIT_AUDIT,
            message,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::PathFailed { source, .. } => exit_code(source),
        Error::NonConvergence { .. }
        | Error::Divergence { .. }
        | Error::StepTooCoarse { .. }
        | Error::BlowUp(_) => EXIT_NONCONVERGENCE,
        Error::AuditFailed(_) => EXIT_AUDIT,
        Error::InvalidParameter(_) => EXIT_CONFIG,
        _ => EXIT_OTHER,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

/// Loads or calibrates constants and checks them against the configuration.
fn prepare(cfg: &SolverConfig) -> Result<Constants, Failure> {
    let constants = match &cfg.constants {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::config(format!("cannot read constants {}: {e}", path.display()))
            })?;
            Constants::from_json(&text).map_err(Failure::from_config)?
        }
        None => {
            eprintln!(
                "calibrating constants (n = {}, {} samples); pass --constants to reuse a file",
                cfg.n, cfg.calibration_samples
            );
            run::load_or_calibrate(cfg)?
        }
    };
    Setup::new(cfg, constants.clone()).map_err(Failure::from_config)?;
    Ok(constants)
}

fn cmd_calibrate(args: &ConfigArgs, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = args.load()?;
    let constants = calibrate(run::calibration_spec(&cfg)).map_err(Failure::from_config)?;
    let path = out.unwrap_or_else(|| cfg.output.join("constants.json"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::from(Error::from(e)))?;
    }
    std::fs::write(&path, constants.to_json()?).map_err(|e| Failure::from(Error::from(e)))?;
    println!("C_b  = {:.6e}", constants.holder);
    println!("C_gn = {:.6e}", constants.gagliardo_nirenberg);
    println!("C'   = {:.6e}", constants.lipschitz());
    println!("C1   = {:.6e}", constants.c1());
    println!("C2   = {:.6e}", constants.c2());
    println!("wrote {}", path.display());
    Ok(())
}

fn report_failures(what: &str, failures: &[String]) -> Result<(), Failure> {
    if failures.is_empty() {
        return Ok(());
    }
    Err(Failure::audit(format!("{what} failed: {}", failures.join("; "))))
}

fn cmd_run(args: &ConfigArgs) -> Result<(), Failure> {
    let cfg = args.load()?;
    let constants = prepare(&cfg)?;
    let out = run::run_single(&cfg, constants)?;
    let r = &out.report;
    println!("segments            {}", r.segment_steps.len());
    println!("max contraction     {:.4}", r.max_contraction_ratio);
    println!("max Picard iters    {}", r.max_picard_iterations);
    println!("ball fraction       {:.4}", r.max_ball_fraction);
    println!("mild residual       {:.3e}", r.mild_residual);
    println!("oracle gap          {:.3e}", r.oracle_gap);
    println!("||u||_L4L4          {:.6e}", r.u_l4l4);
    println!("wrote {}", out.output.display());
    report_failures("audit", &out.failures)
}

fn cmd_ensemble(args: &ConfigArgs) -> Result<(), Failure> {
    let cfg = args.load()?;
    let constants = prepare(&cfg)?;
    let out = run::run_ensemble(&cfg, constants)?;
    let r = &out.report;
    println!("paths               {}", r.n_paths);
    println!(
        "Burkholder ratio    {:.4} +- {:.4}",
        r.burkholder.ratio, r.burkholder.ratio_std_err
    );
    println!("audit pass rate     {:.4}", r.audit_pass_rate);
    println!("||u||_L4L4 mean     {:.6e} +- {:.3e}", r.u_l4l4_mean, r.u_l4l4_ci95);
    println!("max oracle gap      {:.3e}", r.max_oracle_gap);
    println!("wrote {}", out.output.display());
    let failures: Vec<String> = r
        .failures
        .iter()
        .map(|(i, f)| format!("path {i} (seed {:#x}): {}", out.rows[*i].seed, f.join(", ")))
        .collect();
    report_failures("ensemble audit", &failures)
}

fn cmd_audit(file: &Path, args: &ConfigArgs) -> Result<(), Failure> {
    let cfg = args.load()?;
    let text = std::fs::read_to_string(file)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", file.display())))?;
    let traj = Trajectory::from_csv(&text).map_err(Failure::from_config)?;
    let constants = prepare(&cfg)?;
    let audit = run::audit_trajectory(&traj, &constants)?;
    println!("rows                {}", audit.rows);
    println!("energy margin       {:.3e}", audit.energy.margin);
    println!("Gronwall margin     {:.3e}", audit.gronwall.displayed_margin);
    println!("V-budget margin     {:.3e}", audit.gronwall.v_budget_margin);
    println!("max residual        {:.3e}", audit.max_residual);
    report_failures("audit", &audit.failures)
}

fn cmd_version() {
    println!("jumpflow {}", env!("CARGO_PKG_VERSION"));
    println!("report schema {}", jumpflow::verify::report::REPORT_SCHEMA);
    println!("ensemble schema {}", run::ENSEMBLE_SCHEMA);
    println!("constants schema {}", jumpflow::verify::calibrate::CONSTANTS_SCHEMA);
    println!("snapshot version {}", jumpflow::io::snapshot::VERSION);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Calibrate { config, out } => cmd_calibrate(config, out.clone()),
        Command::Run { config } => cmd_run(config),
        Command::Ensemble { config } => cmd_ensemble(config),
        Command::Audit { trajectory, config } => cmd_audit(trajectory, config),
        Command::Version => {
            cmd_version();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn every_config_key_has_a_flag() {
        let cmd = Cli::command();
        let run = cmd.find_subcommand("run").unwrap();
        let flags: Vec<String> = run
            .get_arguments()
            .filter_map(|a| a.get_long().map(str::to_string))
            .collect();
        for key in jumpflow::io::config::keys() {
            assert!(flags.iter().any(|f| f == &key.replace('_', "-")), "no flag for {key}");
        }
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_become_overrides() {
        let args = ConfigArgs {
            dt: Some("5e-4".into()),
            lambda: Some("0".into()),
            ..Default::default()
        };
        let cfg = args.load().unwrap();
        assert_eq!(cfg.dt, 5e-4);
        assert_eq!(cfg.lambda, 0.0);
    }

    #[test]
    fn errors_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::BlowUp(0.5)), EXIT_NONCONVERGENCE);
        let nested = Error::PathFailed {
            index: 3,
            seed: 9,
            source: Box::new(Error::BlowUp(0.1)),
        };
        assert_eq!(exit_code(&nested), EXIT_NONCONVERGENCE);
        assert_eq!(exit_code(&Error::InvalidParameter("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::AuditFailed("x".into())), EXIT_AUDIT);
    }
}
