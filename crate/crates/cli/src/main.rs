use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ns2d_cli::{output_root, run, Command, RunConfig};

/// Stochastic 2D Navier–Stokes experiments.
#[derive(Parser)]
#[command(name = "ns2d", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Integrate one trajectory, or an ensemble with moment checks.
    Simulate(Args),
    /// Check the forced set against the Hörmander conditions.
    CheckForcing(Args),
    /// Stationary energy and enstrophy balance over an ensemble.
    Balance(Args),
    /// Time-averaged energy spectrum and cascade slope.
    Spectrum(Args),
    /// High-mode contraction of the tangent flow.
    Contraction(Args),
    /// Distribution of the Malliavin cone minimum.
    MalliavinSurvey(Args),
    /// Low-mode control of the tangent residual.
    Control(Args),
    /// Two copies driven by the same noise.
    Couple(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Configuration file with dotted keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a key, `--set key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory, overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::CheckForcing(a) => (Command::CheckForcing, a),
        Sub::Balance(a) => (Command::Balance, a),
        Sub::Spectrum(a) => (Command::Spectrum, a),
        Sub::Contraction(a) => (Command::Contraction, a),
        Sub::MalliavinSurvey(a) => (Command::MalliavinSurvey, a),
        Sub::Control(a) => (Command::Control, a),
        Sub::Couple(a) => (Command::Couple, a),
    };
    let mut overrides = args.set;
    if let Some(out) = &args.out {
        overrides.push(format!("output.dir={:?}", out.display().to_string()));
    }
    let mut cfg = match RunConfig::load(args.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = match cfg.output_dir(&output_root()) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(command, &mut cfg, &dir) {
        Ok(summary) => {
            print!("{}", summary.render(command.name()));
            if summary.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
