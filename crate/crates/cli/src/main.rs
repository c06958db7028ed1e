use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use planar_ppv_cli::svg::{plot, PlotKind};
use planar_ppv_cli::{load_config, run};

/// Phase macromodels of planar oscillators.
#[derive(Parser)]
#[command(name = "planar-ppv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a configuration file.
    Run { config: PathBuf },
    /// Render a section CSV as SVG.
    Plot {
        csv: PathBuf,
        /// cycle, basis, lock, density or isochron
        #[arg(long)]
        kind: String,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
}

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("PLANAR_PPV_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| format!("PLANAR_PPV_THREADS must be a count, got `{raw}`"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    match cli.command {
        Command::Run { config } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return ExitCode::from(EXIT_USAGE);
                }
            };
            match run(&cfg) {
                Ok(outcome) => {
                    print!("{}", outcome.summary);
                    if outcome.verification_passed {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("error: basis verification failed");
                        ExitCode::from(EXIT_FAILURE)
                    }
                }
                Err(err) => {
                    eprintln!("error: {err}");
                    ExitCode::from(EXIT_FAILURE)
                }
            }
        }
        Command::Plot { csv, kind, output } => {
            let kind: PlotKind = match kind.parse() {
                Ok(k) => k,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return ExitCode::from(EXIT_USAGE);
                }
            };
            let text = match std::fs::read_to_string(&csv) {
                Ok(t) => t,
                Err(err) => {
                    eprintln!("error: cannot read {}: {err}", csv.display());
                    return ExitCode::from(EXIT_FAILURE);
                }
            };
            let svg = match plot(&text, kind) {
                Ok(s) => s,
                Err(msg) => {
                    eprintln!("error: {}: {msg}", csv.display());
                    return ExitCode::from(EXIT_USAGE);
                }
            };
            if let Err(err) = std::fs::write(&output, svg) {
                eprintln!("error: cannot write {}: {err}", output.display());
                return ExitCode::from(EXIT_FAILURE);
            }
            ExitCode::SUCCESS
        }
    }
}
