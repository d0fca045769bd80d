//! `bridge-green` — compute the Dirichlet/whole-line Green's function
//! defect by its three routes (variational, PDE, Monte Carlo), dump
//! coefficient tables and oracle values, sweep parameter grids and run the
//! verification suite. All runs are reproducible from their config: output
//! files embed a content hash of the configuration and are byte-identical
//! for identical inputs.

mod commands;
mod output;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bridge-green", version, about = "Green's function defect toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump m1/m2/sigma2/g1/g2/g3 over a (t, T) grid as CSV.
    Coeffs(commands::CoeffsArgs),
    /// Print closed-form oracle values as CSV.
    Oracle(commands::OracleArgs),
    /// Zero-noise defect q0 by grid minimization and/or characteristics.
    Q0(commands::Q0Args),
    /// q_eps for eps > 0 by the regularized HJB finite-difference solve.
    QepsPde(commands::QepsPdeArgs),
    /// q_eps by conditioned-bridge Monte Carlo.
    QepsMc(commands::QepsMcArgs),
    /// Rectangular parameter sweep driven by a JSON config.
    Sweep(commands::SweepArgs),
    /// Run the bound/identity/convergence verification suite.
    Verify(commands::VerifyArgs),
}

/// Exit codes: 0 success, 1 numerical/check failure, 2 usage error.
pub(crate) struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            msg: msg.into(),
        }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Self {
            code: 1,
            msg: msg.into(),
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("BRIDGE_GREEN_THREADS") {
        if let Ok(n) = threads.trim().parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        } else {
            eprintln!("error: BRIDGE_GREEN_THREADS must be an integer, got {threads:?}");
            return ExitCode::from(2);
        }
    }
    let cli = Cli::parse(); // clap exits with 2 on usage errors
    let result = match cli.command {
        Command::Coeffs(a) => commands::run_coeffs(a),
        Command::Oracle(a) => commands::run_oracle(a),
        Command::Q0(a) => commands::run_q0(a),
        Command::QepsPde(a) => commands::run_qeps_pde(a),
        Command::QepsMc(a) => commands::run_qeps_mc(a),
        Command::Sweep(a) => commands::run_sweep(a),
        Command::Verify(a) => commands::run_verify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
