use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use diffadvise::harness::aggregate::{write_rows_csv, write_summary_csv};
use diffadvise::harness::{run_experiment, sweep, verify, ExperimentConfig, VerificationParams};
use diffadvise::Error;

#[derive(Parser)]
#[command(name = "diffadvise", version, about = "Differential advising experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write per-round metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the `seed` key.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for metrics.csv and summary.csv; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every method across values of one config key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. `12x8,18x12,24x16`.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the statistical verification suite.
    Verify {
        #[arg(long)]
        trials: Option<usize>,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let text = fs::read_to_string(path)?;
    ExperimentConfig::parse(&text)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let result = run_experiment(&cfg)?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    let mut rows = BufWriter::new(File::create(dir.join("metrics.csv"))?);
                    write_rows_csv(&mut rows, &result.replicas, true)?;
                    rows.flush()?;
                    let mut summary = BufWriter::new(File::create(dir.join("summary.csv"))?);
                    write_summary_csv(&mut summary, &result)?;
                    summary.flush()?;
                    fs::write(dir.join("config.txt"), cfg.to_text())?;
                }
                None => {
                    let stdout = io::stdout();
                    let mut lock = stdout.lock();
                    write_rows_csv(&mut lock, &result.replicas, true)?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let cfg = load_config(&config)?;
            fs::create_dir_all(&out)?;
            let path = out.join(format!("sweep_{axis}.csv"));
            let mut w = BufWriter::new(File::create(&path)?);
            sweep(&cfg, &axis, &values, &mut w)?;
            w.flush()?;
            eprintln!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { trials } => {
            let mut params = VerificationParams::default();
            if let Some(t) = trials {
                params.trials = t;
            }
            let report = verify(&params);
            print!("{report}");
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
