use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bbn_core::fit::FitFamily;
use bbn_core::runner::{cmd_fit, cmd_run, cmd_synth, RunConfig, OUTPUT_DIR_ENV};
use clap::{Parser, Subcommand};

/// Trace-driven routing simulator for body-to-body networks.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured protocols and write outcomes, summaries, outage
    /// curves and hop histograms.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit a gamma or Rician distribution to a gain column of a CSV file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        family: FitFamily,
        /// Where to write the fit; defaults to the current directory.
        #[arg(long, env = OUTPUT_DIR_ENV, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Write the synthetic trace described by a config file.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => {
            RunConfig::load(&config)
                .and_then(|cfg| cmd_run(&cfg))
                .map(|files| {
                    let mut out = std::io::stdout().lock();
                    for f in files {
                        let _ = writeln!(out, "{}", f.display());
                    }
                })
        }
        Command::Fit {
            input,
            family,
            out_dir,
        } => cmd_fit(&input, family, &out_dir).map(|r| {
            let _ = writeln!(std::io::stdout(), "{}", fit_line(&r));
        }),
        Command::Synth { config, out } => {
            RunConfig::load(&config).and_then(|cfg| cmd_synth(&cfg, &out))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn fit_line(r: &bbn_core::FitResult) -> String {
    format!(
        "{} fit: {:?}, loglik {}, n = {}",
        r.family, r.params, r.loglik, r.n_samples
    )
}
