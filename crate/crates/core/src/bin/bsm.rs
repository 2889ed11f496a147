use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bsm::experiment::{self, ExperimentConfig, SweepAxis};
use bsm::trainer::Method;

#[derive(Parser)]
#[command(
    name = "bsm",
    version,
    about = "Train and evaluate noise-robust classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, estimate and write a full report for one config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run one experiment per value along an axis.
    Sweep {
        config: PathBuf,
        /// alphas | noise_rates | methods | tta_repeats | ensemble_sizes
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Recompute metrics from a run directory's predictions.
    Report { run_dir: PathBuf },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise_rate: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Output directory; relative paths resolve against $BSM_OUTPUT_ROOT.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn load(&self, path: &Path) -> bsm::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(m) = self.method {
            cfg.train.method = m;
        }
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if let Some(r) = self.noise_rate {
            cfg.train.noise_rate = r;
        }
        if let Some(a) = self.alpha {
            cfg.train.alpha = a;
        }
        if let Some(e) = self.max_epochs {
            cfg.train.max_epochs = e;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> bsm::Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = overrides.load(&config)?;
            let dir = cfg.resolved_output_dir();
            let out = experiment::run_experiment(&cfg)?;
            for d in &out.diagnostics {
                eprintln!("note: {d}");
            }
            let r = &out.report;
            println!(
                "{} {} eta={} ece={:.4} auc={:.4} acc={:.4} -> {}",
                r.method.name(),
                r.estimator,
                r.noise_rate,
                r.ece,
                r.roc_auc,
                r.accuracy,
                dir.display()
            );
        }
        Command::Sweep {
            config,
            axis,
            values,
            overrides,
        } => {
            let cfg = overrides.load(&config)?;
            let (path, rows) = experiment::run_sweep(&cfg, axis, &values)?;
            for row in &rows {
                match &row.report {
                    Ok(r) => println!(
                        "{}={} ece={:.4} auc={:.4}",
                        axis.name(),
                        row.value,
                        r.ece,
                        r.roc_auc
                    ),
                    Err(e) => println!("{}={} failed: {e}", axis.name(), row.value),
                }
            }
            println!("-> {}", path.display());
        }
        Command::Report { run_dir } => {
            let r = experiment::recompute_report(&run_dir)?;
            let path = experiment::write_recomputed(&run_dir, &r)?;
            println!(
                "ece={} brier={} nll={} auc={} acc={} -> {}",
                r.ece,
                r.brier,
                r.nll,
                r.roc_auc,
                r.accuracy,
                path.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
