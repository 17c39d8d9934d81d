use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use commands::Status;
use config::ExperimentConfig;
use output::Output;

const EXIT_VALIDATION: u8 = 1;
const EXIT_DIVERGENCE: u8 = 2;
const EXIT_AUDIT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "levy-dp",
    version,
    about = "Heavy-tailed noisy GD/SGD: sampling, training, privacy accounting and audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true, default_value = "levy-dp.toml")]
    config: PathBuf,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log informational messages.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Draw stable noise and audit its characteristic function.
    Sample,
    /// Print regularity, drift and kernel-distance constants.
    Constants,
    /// Compute the (0, delta) budget with n and d sweeps.
    Budget,
    /// Run replica chains and write their final states.
    Train,
    /// Run the configured audit suites.
    Verify,
}

struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, m: &log::Metadata<'_>) -> bool {
        m.level() <= log::max_level()
    }

    fn log(&self, r: &log::Record<'_>) {
        if self.enabled(r.metadata()) {
            eprintln!("{}: {}", r.level().as_str().to_lowercase(), r.args());
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLogger = StderrLogger;

fn run(cli: &Cli) -> Result<Status> {
    let (mut cfg, base) = ExperimentConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let out = Output::new(&cli.out, &cfg.hash())?;
    match cli.command {
        Command::Sample => commands::sample(&cfg, &out),
        Command::Constants => commands::constants(&cfg, &base, &out),
        Command::Budget => commands::budget(&cfg, &base, &out),
        Command::Train => commands::train(&cfg, &base, &out),
        Command::Verify => commands::verify(&cfg, &base, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let _ = log::set_logger(&LOGGER);
    log::set_max_level(if cli.verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    });
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::AuditFailed) => ExitCode::from(EXIT_AUDIT),
        Err(e) => {
            eprintln!("error: {e:#}");
            let diverged = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<levy_dp::Error>(),
                    Some(levy_dp::Error::Divergence { .. })
                )
            });
            ExitCode::from(if diverged {
                EXIT_DIVERGENCE
            } else {
                EXIT_VALIDATION
            })
        }
    }
}
