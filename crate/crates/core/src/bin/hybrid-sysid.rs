use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use hybrid_sysid::experiment::{self, ExperimentConfig, REGISTRY};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(version, about = "Run online or offline learning experiments from a JSON config")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `out_dir` in the config (default `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the registered case studies.
    ListCasestudies,
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::ListCasestudies => {
            for (name, about) in REGISTRY {
                println!("{name:<16} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let report = experiment::validate(&cfg);
            if report.is_ok() {
                println!("ok");
                ExitCode::SUCCESS
            } else {
                eprint!("{report}");
                ExitCode::from(EXIT_CONFIG)
            }
        }
        Command::Run { config, seed, out } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = out.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let report = experiment::validate(&cfg);
            if !report.is_ok() {
                eprint!("{report}");
                return ExitCode::from(EXIT_CONFIG);
            }
            match experiment::run(&cfg, &out) {
                Ok(r) => {
                    for (k, v) in r.metrics {
                        println!("{k} = {v}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
    }
}
