use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use expomodes_cli::config::ToleranceConfig;
use expomodes_cli::{
    cmd_build, cmd_equilibrium, cmd_spectrum, cmd_sweep, cmd_verify, parse_coefficients, CliError,
    Context, Exit, Outcome, RunConfig,
};

/// Exponential-mode solutions of the reduced epidemic model.
#[derive(Parser)]
#[command(name = "expomodes", version)]
struct Cli {
    /// JSON run configuration; `-` reads stdin.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root membership tolerance for growth rates.
    #[arg(long, global = true)]
    tol_root: Option<f64>,
    /// Constraint residual tolerance.
    #[arg(long, global = true)]
    tol_constraint: Option<f64>,
    /// Verification deviation tolerance; the f-drift tolerance is set to a
    /// tenth of it.
    #[arg(long, global = true)]
    tol_verify: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roots of the characteristic quartic (spectrum.json).
    Spectrum {
        /// Solve these coefficients c0..c4 instead, e.g. `[24,-50,35,-10,1]`.
        #[arg(long)]
        coefficients: Option<String>,
    },
    /// Mode set and constraint report (modeset.json, constraint_report.json).
    Build,
    /// Numerical check of a mode set (verification.json, trajectory.csv).
    Verify,
    /// K=2 constraint sweep over one parameter (sweep.csv, solutions.json).
    Sweep,
    /// Equilibrium of the original system (equilibrium.json).
    Equilibrium,
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => match &cli.command {
            Command::Spectrum {
                coefficients: Some(_),
            } => RunConfig::default(),
            _ => return Err(CliError::Invalid("--config is required".into())),
        },
    };
    let ctx = Context {
        out: cli.out,
        tolerances: ToleranceConfig {
            root: cli.tol_root,
            constraint: cli.tol_constraint,
            deviation: cli.tol_verify,
            drift: cli.tol_verify.map(|t| 0.1 * t),
        },
    };
    match cli.command {
        Command::Spectrum { coefficients } => {
            let c = coefficients
                .as_deref()
                .map(parse_coefficients)
                .transpose()?;
            cmd_spectrum(&cfg, &ctx, c)
        }
        Command::Build => cmd_build(&cfg, &ctx),
        Command::Verify => cmd_verify(&cfg, &ctx),
        Command::Sweep => cmd_sweep(&cfg, &ctx),
        Command::Equilibrium => cmd_equilibrium(&cfg, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                Exit::InvalidInput.code()
            } else {
                0
            });
        }
    };
    // last line of defence for the exit-code contract
    let result = std::panic::catch_unwind(|| run(cli));
    match result {
        Ok(Ok(outcome)) => {
            // a closed pipe must not turn into a panic after the work is done
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{}", outcome.summary);
            for f in &outcome.files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
            ExitCode::from(outcome.exit.code())
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit().code())
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(Exit::InvalidInput.code())
        }
    }
}
