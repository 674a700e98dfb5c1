//! Batch experiment runner.
//!
//! ```text
//! projline <gram|kernel|fscurrent|zeros|ik|converge|certify>
//!          [--config PATH] [--seed N] [--threads N] [--csv] [--out DIR]
//!          [--k K] [--mc M]
//! ```
//!
//! Exit codes: 0 success, 2 verdict failure (a convergence or bound assertion
//! did not hold), 1 operational error. The default output root is
//! `$PROJLINE_OUT` (falling back to `./runs`).

use clap::{Parser, Subcommand as ClapSubcommand};
use projline::config::{parse_config, RunConfig};
use projline::runner::{exit_code_for, resolve_out_dir, run, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "projline", version, about = "Bergman kernels, curvature measures and random polynomial zeros on the projective line")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file (sectioned key = value); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the ensemble seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap the worker pool (0 = library default).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Also print the plot-ready CSV body to stdout.
    #[arg(long, global = true)]
    csv: bool,

    /// Output directory (default: $PROJLINE_OUT/<subcommand>-<config hash>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Gram matrices and orthonormal-basis diagnostics per degree.
    Gram,
    /// Bergman kernel fields P_p with the trace check.
    Kernel,
    /// Fubini–Study currents γ_p as grid measures.
    Fscurrent,
    /// Random-section zeros, empirical measures and discrepancy tables.
    Zeros,
    /// Monte Carlo I(k) = −E[log|z_k|] on the unit sphere vs the exact value.
    Ik {
        /// Sphere dimension k.
        #[arg(long)]
        k: Option<usize>,
        /// Monte Carlo sample count.
        #[arg(long)]
        mc: Option<usize>,
    },
    /// Convergence table (L¹ log-kernel, current gap, zero gap, log d_p/A_p).
    Converge,
    /// Kernel-ratio certificate with the K₁/K₂ ≤ ratio ≤ K₃ sandwich.
    Certify,
}

fn load_config(cli: &Cli) -> Result<RunConfig, projline::Error> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Command::Ik { k, mc } = &cli.command {
        if let Some(k) = k {
            cfg.ik_k = *k;
        }
        if let Some(mc) = mc {
            cfg.ik_mc = *mc;
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let sub = match cli.command {
        Command::Gram => Subcommand::Gram,
        Command::Kernel => Subcommand::Kernel,
        Command::Fscurrent => Subcommand::FsCurrent,
        Command::Zeros => Subcommand::Zeros,
        Command::Ik { .. } => Subcommand::Ik,
        Command::Converge => Subcommand::Converge,
        Command::Certify => Subcommand::Certify,
    };
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1u8);
        }
    };
    if cfg.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
        {
            eprintln!("error: could not size the worker pool: {e}");
            return ExitCode::from(1u8);
        }
    }
    let out_dir = resolve_out_dir(cli.out.as_deref(), sub, &cfg);
    match run(sub, &cfg, &out_dir) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if cli.csv {
                for f in &outcome.files {
                    if f.extension().map(|e| e == "csv").unwrap_or(false) {
                        if let Ok(body) = std::fs::read_to_string(f) {
                            print!("{body}");
                        }
                    }
                }
            }
            println!("wrote {} files to {}", outcome.files.len(), outcome.out_dir.display());
            match outcome.verdict_failed {
                None => ExitCode::from(0u8),
                Some(msg) => {
                    eprintln!("verdict failure: {msg}");
                    ExitCode::from(2u8)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
