use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chns_cli::{check, load_config, manifest_members, measure, run, CliResult, Options, OUT_DIR_ENV};

/// Stochastic Cahn-Hilliard-Navier-Stokes simulator.
#[derive(Parser, Debug)]
#[command(name = "chns", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output directory; overrides the environment and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace the noise seed of the config.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Worker threads for ensembles (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

impl Common {
    fn options(&self) -> Options {
        Options {
            out: self.out.clone(),
            seed_override: self.seed_override,
            quiet: self.quiet,
            workers: self.workers,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One trajectory: observables CSV, checkpoints, manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Independent members on a worker pool.
    Ensemble {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `members` of a manifest, else 1.
        #[arg(long)]
        members: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Noise conditions and the property suite.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Window averages, stationarity and tightness over an archive.
    Measure {
        /// Run or ensemble output directory.
        #[arg(long)]
        archive: PathBuf,
        /// Observables spec file.
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Strong order of the time stepper.
    EmOrder {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Run { config, common } => {
            let opts = common.options();
            let (cfg, _) = load_config(&config, &opts)?;
            run::cmd_run(&cfg, &opts).map(drop)
        }
        Command::Ensemble {
            config,
            members,
            common,
        } => {
            let opts = common.options();
            let (cfg, text) = load_config(&config, &opts)?;
            let n = members.or_else(|| manifest_members(&text)).unwrap_or(1);
            run::cmd_ensemble(&cfg, n, &opts).map(drop)
        }
        Command::Check { config, common } => {
            let opts = common.options();
            let (cfg, _) = load_config(&config, &opts)?;
            check::cmd_check(&cfg, &opts).map(drop)
        }
        Command::Measure { archive, spec, common } => {
            let opts = common.options();
            let out = opts
                .out
                .clone()
                .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
                .unwrap_or_else(|| archive.clone());
            measure::cmd_measure(&archive, &spec, &out, &opts).map(drop)
        }
        Command::EmOrder { config, common } => {
            let opts = common.options();
            let (cfg, _) = load_config(&config, &opts)?;
            run::cmd_em_order(&cfg, &opts).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chns: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
