//! Command-line interface over the sampling library.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use msm::config::Config;
use msm::diagnostics::convergence_report;
use msm::error::{MsmError, Result};
use msm::harness::{compare_runs, condition_demo, generate_reference, run_experiment};
use msm::ioutil;
use msm::mcmc::ChainRecord;

#[derive(Parser)]
#[command(
    name = "msm",
    version,
    about = "Two-stage multiscale MCMC for log-permeability fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a reference field from the prior and write its observations.
    GenerateReference {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write field.txt and observations.csv here instead of the
        /// configured reference paths.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured sampling experiment.
    Run {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the configured chain count.
        #[arg(long)]
        chains: Option<usize>,
        /// Override the configured proposal count per chain.
        #[arg(long)]
        proposals: Option<u64>,
        /// Override the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute convergence diagnostics from a run's chain records.
    Diagnose {
        /// Run directory holding chains/chainN.csv.
        #[arg(long)]
        run: PathBuf,
        /// Fraction of proposals discarded as burn-in.
        #[arg(long, default_value_t = 0.0)]
        burn_in_fraction: f64,
        /// Number of prefix lengths to evaluate.
        #[arg(long, default_value_t = 16)]
        points: usize,
        /// Write the recomputed convergence CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the convergence traces of several runs.
    Compare {
        /// Run directories to compare.
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        /// Long-format comparison CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check how closely conditioned samples honor point measurements.
    ConditionDemo {
        /// Run configuration (TOML) with a [conditioning] section.
        #[arg(long)]
        config: PathBuf,
        /// Conditioned samples to draw.
        #[arg(long, default_value_t = 100)]
        draws: usize,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_run_records(dir: &Path) -> Result<Vec<ChainRecord>> {
    let mut records = Vec::new();
    loop {
        let path = dir.join("chains").join(format!("chain{}.csv", records.len()));
        if !path.exists() {
            break;
        }
        records.push(ChainRecord::read_csv_path(records.len(), &path)?);
    }
    if records.is_empty() {
        return Err(MsmError::Argument(format!(
            "no chain records under {}",
            dir.join("chains").display()
        )));
    }
    Ok(records)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateReference { config, seed, out } => {
            let mut cfg = Config::load(&config)?;
            if let Some(dir) = out {
                cfg.reference.field = dir.join("field.txt");
                cfg.reference.observations = dir.join("observations.csv");
            }
            let summary = generate_reference(&cfg, seed)?;
            println!(
                "reference field: {} (sha256 {})",
                summary.field_path.display(),
                &summary.field_sha256[..16]
            );
            println!(
                "observations: {} ({} cells, sha256 {})",
                summary.observations_path.display(),
                summary.n_observations,
                &summary.observations_sha256[..16]
            );
        }
        Command::Run { config, chains, proposals, seed, out } => {
            let mut cfg = Config::load(&config)?;
            if let Some(c) = chains {
                cfg.run.chains = c;
            }
            if let Some(p) = proposals {
                cfg.run.proposals = p;
            }
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            cfg.validate()?;
            let summary = run_experiment(&cfg)?;
            println!("{}", summary.to_text());
        }
        Command::Diagnose { run: run_dir, burn_in_fraction, points, out } => {
            if !(0.0..1.0).contains(&burn_in_fraction) {
                return Err(MsmError::Argument(format!(
                    "burn-in fraction must lie in [0, 1), got {burn_in_fraction}"
                )));
            }
            let records = load_run_records(&run_dir)?;
            let shortest =
                records.iter().map(|r| r.n_proposals()).min().expect("at least one record");
            let burn_in = (burn_in_fraction * shortest as f64).floor() as usize;
            let report = convergence_report(&records, burn_in, points)?;
            if let Some(path) = &out {
                ioutil::write_atomic(path, report.to_csv().as_bytes())?;
            }
            let p = report.final_point();
            println!("chains = {}, shortest chain = {} proposals", records.len(), shortest);
            println!(
                "final mpsrf = {} (max psrf = {}) after {} proposals with burn-in {}",
                p.mpsrf, p.psrf_max, p.iteration, burn_in
            );
            if let Some(path) = out {
                println!("convergence CSV written to {}", path.display());
            }
        }
        Command::Compare { runs, out } => {
            let comparison = compare_runs(&runs, &out)?;
            println!("{}", comparison.to_text());
        }
        Command::ConditionDemo { config, draws, seed, out } => {
            let mut cfg = Config::load(&config)?;
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            let seed = seed.unwrap_or(cfg.run.seed);
            let summary = condition_demo(&cfg, draws, seed)?;
            println!(
                "{} draws against {} measurements: max abs error = {}",
                summary.draws, summary.n_measurements, summary.max_abs_error
            );
            println!("report: {}", summary.out_dir.join("report.txt").display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
