use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sampled_qn::diagnostics::{self, SpectrumCommandError, SpectrumConfig};
use sampled_qn::harness::{self, data, RunConfig};

#[derive(Parser)]
#[command(name = "sqn", version, about = "Sampled quasi-Newton benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method over a list of seeds
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Tabulate accuracy and loss at checkpoints across experiment directories
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Eigenvalue spectra of SR1-type approximations along an SR1 run
    Spectrum {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the two-class toy dataset as CSV
    GenData {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

const CONFIG_ERROR: u8 = 1;
const ALL_ABORTED: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(CONFIG_ERROR);
                }
            };
            match harness::run_experiment(&cfg) {
                Ok(summary) => {
                    for a in &summary.aborts {
                        eprintln!("seed {} aborted: {}", a.seed, a.reason);
                    }
                    println!(
                        "{} on {}: {} seeds, {} aborted, output in {}",
                        summary.method,
                        summary.problem,
                        summary.seeds.len(),
                        summary.aborts.len(),
                        cfg.output_dir.display()
                    );
                    if summary.all_aborted() {
                        ExitCode::from(ALL_ABORTED)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(CONFIG_ERROR)
                }
            }
        }
        Command::Compare { dirs, out } => match harness::compare_report(&dirs, &out) {
            Ok(n) => {
                println!("wrote {n} rows to {}", out.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(CONFIG_ERROR)
            }
        },
        Command::Spectrum { config } => {
            let cfg = match SpectrumConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(CONFIG_ERROR);
                }
            };
            match diagnostics::run_spectrum_command(&cfg) {
                Ok(reports) => {
                    for r in reports {
                        println!(
                            "checkpoint {}: match sr1 {:.4e}, lsr1 {:.4e}, slsr1 {:.4e}",
                            r.checkpoint, r.match_sr1, r.match_lsr1, r.match_slsr1
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(SpectrumCommandError::Diagnostics(diagnostics::DiagnosticsError::Run(e))) => {
                    eprintln!("error: SR1 run aborted: {e}");
                    ExitCode::from(ALL_ABORTED)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(CONFIG_ERROR)
                }
            }
        }
        Command::GenData { seed, out } => {
            let d = data::gen_toy_dataset(seed);
            match data::write_dataset_csv(&d, &out) {
                Ok(()) => {
                    println!("wrote {} points to {}", d.len(), out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(CONFIG_ERROR)
                }
            }
        }
    }
}
