use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use oscal_core::config::Algorithm;
use oscal_core::pipeline;
use oscal_core::{Error, RunConfig};

/// Spectral calibration of oscillatory ODE models.
#[derive(Debug, Parser)]
#[command(name = "oscal", version)]
struct Cli {
    /// TOML configuration file. Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the sweep and the intervention grid (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Continue an interrupted sweep or chain.
    #[arg(long, global = true)]
    resume: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic replicate data at a known parameter vector.
    Simulate,
    /// Likelihood sweep and prospect map.
    Prognose,
    /// Run the sampler.
    Calibrate {
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
        #[arg(long)]
        multiset_size: Option<usize>,
    },
    /// Intervention summaries from the chain.
    Analyze,
    /// Bundle every output into report.txt.
    Report {
        /// Bundle outputs even when their config hashes differ.
        #[arg(long)]
        force: bool,
    },
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum AlgorithmArg {
    Gmss,
    Mh,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::InvalidArgument(_)) => 2,
        Some(Error::Data(_) | Error::Format { .. } | Error::Io { .. }) => 3,
        Some(Error::MissingPrerequisite { .. }) => 5,
        Some(Error::Compute(_) | Error::Domain(_)) => 4,
        None => 4,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    if let Command::Calibrate { algorithm, multiset_size } = &cli.command {
        if let Some(a) = algorithm {
            cfg.sampler.algorithm = match a {
                AlgorithmArg::Gmss => Algorithm::Gmss,
                AlgorithmArg::Mh => Algorithm::Mh,
            };
        }
        if let Some(m) = multiset_size {
            cfg.sampler.multiset_size = *m;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn log_bounds(cfg: &RunConfig) {
    eprintln!("parameter bounds (natural -> scaled):");
    for (j, b) in cfg.model.bounds.iter().enumerate() {
        eprintln!("  theta{} in [{}, {}] -> u{} in (0, 1]", j + 1, b[0], b[1], j + 1);
    }
}

fn run(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<()> {
    eprintln!("config hash {}", cfg.hash());
    match &cli.command {
        Command::Config => print!("{}", cfg.to_canonical_toml()),
        Command::Simulate => {
            let r = pipeline::simulate_command(cfg)?;
            if !r.oscillating {
                eprintln!("warning: the simulated trajectory does not oscillate");
            }
            eprintln!("wrote {} and {}", r.data_path.display(), r.truth_path.display());
        }
        Command::Prognose => {
            log_bounds(cfg);
            let r = pipeline::prognose_command(cfg, cli.resume)?;
            eprintln!(
                "{} points, {} failed, {} above l_min={:.4}; {} marked cells, high volume {:.4e}",
                r.evaluations,
                r.failures,
                r.successes,
                r.l_min,
                r.map.marked_count(),
                r.map.high_volume()
            );
        }
        Command::Calibrate { .. } => {
            log_bounds(cfg);
            let r = pipeline::calibrate_command(cfg, cli.resume)?;
            if let Some(it) = r.resumed_from {
                eprintln!("resumed at iteration {it}");
            }
            let rates: Vec<String> = r.theta_acceptance.iter().map(|a| format!("{a:.2}")).collect();
            eprintln!("{} retained draws; theta acceptance [{}]", r.retained, rates.join(", "));
            if !r.stationary {
                eprintln!("warning: cumulative histograms have not settled");
            }
        }
        Command::Analyze => {
            let r = pipeline::analyze_command(cfg)?;
            eprintln!("{} draws (resample seed {})", r.draws, r.resample_seed);
        }
        Command::Report { force } => {
            let p = pipeline::report_command(cfg, *force)?;
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("building the worker pool");
    let result = pool.and_then(|p| p.install(|| run(&cli, &cfg)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
