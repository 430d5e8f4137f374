use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use kerr::config::RunConfig;
use kerr::pipeline;

#[derive(Parser)]
#[command(
    name = "kerr",
    version,
    about = "Kerr-cavity collapse/revival simulation and Q-function tomography"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Signal Q_n grids of the evolving cavity at the configured times.
    Simulate(Common),
    /// Sampled tomography record at one evolution time.
    Measure(Common),
    /// Reconstruct a density matrix from a dataset CSV.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV (defaults to the measure output).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Characteristic times, frequencies and evolution series.
    Analyze(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; each command writes into a subdirectory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let pool = pipeline::thread_pool()?;
    pool.install(|| match cli.command {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            pipeline::cmd_simulate(&cfg, &cfg.output_dir.join("simulate")).map(drop)
        }
        Command::Measure(c) => {
            let cfg = c.load()?;
            pipeline::cmd_measure(&cfg, &cfg.output_dir.join("measure")).map(drop)
        }
        Command::Reconstruct { common, input } => {
            let mut cfg = common.load()?;
            if input.is_some() {
                cfg.reconstruct.input = input;
            }
            let input = cfg
                .reconstruct
                .input
                .clone()
                .unwrap_or_else(|| cfg.output_dir.join("measure").join("dataset.csv"));
            pipeline::cmd_reconstruct(&input, &cfg, &cfg.output_dir.join("reconstruct")).map(drop)
        }
        Command::Analyze(c) => {
            let cfg = c.load()?;
            pipeline::cmd_analyze(&cfg, &cfg.output_dir.join("analyze")).map(drop)
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
