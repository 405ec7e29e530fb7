use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use pullback_sim::cli::{run, Experiment, RunConfig};
use std::path::PathBuf;

/// Pullback-attractor simulations for gradient SDEs with intrinsic and
/// common additive noise.
#[derive(Parser)]
#[command(name = "pullback-sim", version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo pullback density for one common-noise realisation.
    Pullback(CommonArgs),
    /// Fokker-Planck solve along a sampled realisation, with conservation
    /// diagnostics.
    FpSolve(CommonArgs),
    /// Contraction-rate construction (and optional decay-envelope check).
    Contraction(CommonArgs),
    /// The three synchronisation regimes: time-averaged variances plus
    /// density overlays.
    Figure1(CommonArgs),
    /// Cross-validate engine and solver against the exact linear-SDE
    /// solutions.
    OuValidate(CommonArgs),
    /// Compare the time average of an observable with its realisation
    ///-ensemble average.
    Ergodic(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default: runs/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let (experiment, common) = match &args.command {
        Command::Pullback(c) => (Experiment::Pullback, c),
        Command::FpSolve(c) => (Experiment::FpSolve, c),
        Command::Contraction(c) => (Experiment::Contraction, c),
        Command::Figure1(c) => (Experiment::Figure1, c),
        Command::OuValidate(c) => (Experiment::OuValidate, c),
        Command::Ergodic(c) => (Experiment::Ergodic, c),
    };

    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default_for(experiment),
    };
    match config.experiment {
        None => config.experiment = Some(experiment),
        Some(e) if e != experiment => {
            bail!("config is for experiment '{}', but '{}' was invoked", e.name(), experiment.name())
        }
        _ => {}
    }
    if let Some(seed) = common.seed {
        config.master_seed = Some(seed);
    }
    let out_dir = common
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(experiment.name()));

    let execute = || -> Result<_> { Ok(run(&config, &out_dir)?) };

    let output = match common.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building thread pool")?;
            pool.install(execute)?
        }
        None => execute()?,
    };

    eprintln!("wrote {}", output.out_dir.display());
    for check in &output.checks {
        eprintln!(
            "[{}] {}: value {:.6e} vs threshold {:.6e}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.value,
            check.threshold
        );
    }
    if !output.all_passed() {
        bail!("one or more built-in checks failed");
    }
    Ok(())
}
