use baryflow::config::{parse_config, ModeName};
use baryflow::run::{run, RunStatus};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "baryflow", version, about = "Barycenters and geodesics of density fields by dynamic transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a configuration file.
    Run {
        /// Path to the TOML configuration.
        config: PathBuf,
        /// Override the stopping tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Override the iteration cap.
        #[arg(long)]
        max_iter: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<String>,
        /// Override the snapshot times, comma separated (e.g. `0,0.5,1`).
        #[arg(long)]
        snapshots: Option<String>,
        /// Override the run mode.
        #[arg(long, value_parser = ["barycenter", "geodesic"])]
        mode: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            tol,
            max_iter,
            out,
            snapshots,
            mode,
        } => {
            let mut cfg = match parse_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            if let Some(t) = tol {
                cfg.pdhg.tol = t;
            }
            if let Some(mi) = max_iter {
                cfg.pdhg.max_iter = mi;
            }
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            if let Some(times) = snapshots {
                match times
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                {
                    Ok(parsed) => cfg.output.snapshots = parsed,
                    Err(e) => {
                        eprintln!("error: bad --snapshots list: {e}");
                        return ExitCode::from(1);
                    }
                }
            }
            if let Some(m) = mode {
                cfg.model.mode = if m == "geodesic" {
                    ModeName::Geodesic
                } else {
                    ModeName::Barycenter
                };
            }
            if let Err(e) = cfg.validate() {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            match run(&cfg) {
                Ok(report) => match report.status {
                    RunStatus::Converged => ExitCode::SUCCESS,
                    RunStatus::MaxIterReached => ExitCode::from(2),
                },
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
