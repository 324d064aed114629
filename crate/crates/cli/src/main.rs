//! `vpfp`: batch driver for the regularized VPFP particle laboratory.

mod commands;
mod config;
mod output;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "vpfp",
    about = "Stochastic particle approximation of the Vlasov-Poisson-Fokker-Planck system: \
             coupled simulations and scaling-law sweeps",
    version
)]
struct Cli {
    /// TOML configuration file; omitted means all defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the base random seed (beats VPFP_SEED and the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread count; 0 or omitted uses all cores (beats VPFP_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory (beats the config file).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Downgrade theorem parameter-window violations (delta, lambda2) from
    /// errors to warnings.
    #[arg(long, global = true)]
    allow_out_of_theorem_range: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the coupled interacting/mean-field ensembles and record
    /// trajectories plus the weighted distance series.
    Simulate,
    /// Median maximal coupling distance against N, with fit and
    /// monotonicity verdict.
    CouplingSweep,
    /// Law-of-large-numbers consistency residual against N (kind
    /// `consistency` or `ell-consistency` from the config).
    ConsistencySweep,
    /// Kernel norm scalings: L2, gradient sup and the k1 splitting L1 law.
    KernelSweep,
    /// Wasserstein distance of the empirical measure to reference draws.
    WassersteinSweep,
    /// Collision-candidate counts against the binomial-tail bound.
    CollisionSweep,
    /// Run the oracle battery and kernel invariants; exit 0 iff all pass.
    Selftest,
    /// Write gnuplot scripts next to the CSV files in the output directory.
    EmitPlots,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => String::new(),
    };
    let cfg = RunConfig::parse(&text)?.resolve(cli.seed, cli.threads, cli.output_dir.clone())?;
    let warnings = cfg.validate(cli.allow_out_of_theorem_range)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    if cfg.output.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.output.threads)
            .build_global()
            .ok();
    }

    if let Command::Selftest = cli.command {
        let code = selftest::run()?;
        return Ok(ExitCode::from(code as u8));
    }

    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;

    let outcome = match cli.command {
        Command::Simulate => commands::simulate(&cfg, &dir)?,
        Command::CouplingSweep => commands::coupling_sweep(&cfg, &dir)?,
        Command::ConsistencySweep => commands::consistency_sweep(&cfg, &dir)?,
        Command::KernelSweep => commands::kernel_sweep(&cfg, &dir)?,
        Command::WassersteinSweep => commands::wasserstein_sweep(&cfg, &dir)?,
        Command::CollisionSweep => commands::collision_sweep(&cfg, &dir)?,
        Command::EmitPlots => commands::emit_plots(&dir)?,
        Command::Selftest => unreachable!(),
    };

    if let Some(criteria) = outcome.summary.get("criteria").and_then(|c| c.as_array()) {
        for c in criteria {
            let name = c["name"].as_str().unwrap_or("?");
            let pass = c["pass"].as_bool().unwrap_or(false);
            let detail = c["detail"].as_str().unwrap_or("");
            println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        }
    }
    if outcome.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("acceptance tolerance violated; see summary.json");
        Ok(ExitCode::from(2))
    }
}
