//! `mkdvlab`: runs the sampling, flow, pairing and invariance experiments
//! from flat JSON configs and writes CSV tables plus a `run.json` manifest.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use config::LoadedConfig;
use experiments::Ctx;
use output::{Outputs, RunManifest};

#[derive(Parser)]
#[command(name = "mkdvlab", version, about = "Experiments for the truncated mKdV flow and its weighted Gaussian measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample fields from the Gaussian measure and tabulate the spectrum.
    Sample(Args),
    /// Integrate the truncated flow and record energies and norms.
    Evolve(Args),
    /// Compare analytic and finite-difference energy derivatives.
    Estar(Args),
    /// Pairing bounds, Wick moments and decay fits over the N ladder.
    Decay(Args),
    /// Almost-invariance defect of the weighted measure.
    Invariance(Args),
    /// Cauchy gaps between truncations N and m·N.
    Converge(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Config file, or the `run.json` of an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; 1 is the bit-exact reference mode.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides MKDV_SEED and the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::Evolve(_) => "evolve",
            Command::Estar(_) => "estar",
            Command::Decay(_) => "decay",
            Command::Invariance(_) => "invariance",
            Command::Converge(_) => "converge",
        }
    }

    fn args(&self) -> &Args {
        match self {
            Command::Sample(a) | Command::Evolve(a) | Command::Estar(a) | Command::Decay(a) | Command::Invariance(a) | Command::Converge(a) => a,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mkdvlab: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cmd = cli.command;
    let args = cmd.args();
    let loaded = LoadedConfig::from_path(&args.config)?;
    let cfg = &loaded.config;
    if cfg.experiment != cmd.name() {
        bail!("config is for experiment {:?}, not {:?}", cfg.experiment, cmd.name());
    }
    let env = std::env::var("MKDV_SEED").ok();
    let seed = config::resolve_seed(cfg.seed, env.as_deref(), args.seed)?;

    let workers = args.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if workers == 0 {
        bail!("--workers must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .context("configuring the worker pool")?;

    let started = chrono::Utc::now();
    let mut out = Outputs::create(&cfg.output_dir)?;
    let ctx = Ctx { cfg, seed };
    let summary = match &cmd {
        Command::Sample(_) => experiments::sample(&ctx, &mut out),
        Command::Evolve(_) => experiments::evolve_cmd(&ctx, &mut out),
        Command::Estar(_) => experiments::estar(&ctx, &mut out),
        Command::Decay(_) => experiments::decay(&ctx, &mut out),
        Command::Invariance(_) => experiments::invariance(&ctx, &mut out),
        Command::Converge(_) => experiments::converge(&ctx, &mut out),
    }?;
    let manifest = RunManifest {
        manifest_version: 1,
        tool: format!("mkdvlab {}", env!("CARGO_PKG_VERSION")),
        command: cmd.name(),
        config: &loaded.raw,
        resolved_seed: seed,
        workers,
        started: started.to_rfc3339(),
        finished: chrono::Utc::now().to_rfc3339(),
        outputs: out.files().to_vec(),
        summary,
    };
    out.json("run.json", &manifest)?;
    println!("{}", cfg.output_dir.join("run.json").display());
    Ok(())
}
