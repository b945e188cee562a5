//! Command-line front end: data generation, training, evaluation, ablation
//! sweeps and reports.

pub mod commands;
pub mod config;
pub mod plot;
pub mod sweep;

use std::fs;
use std::path::{Path, PathBuf};

use asymdiff_core::baselines::ArmName;
use asymdiff_core::dataset::SynthSpec;
use asymdiff_core::{ErrorClass, Result};
use clap::{Parser, Subcommand};

use crate::config::{load_toml, SweepRun, TrainRun};

#[derive(Debug, Parser)]
#[command(name = "asymdiff", version, about = "Asymmetric feature-dropout diffusion for CTR models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (train.csv, eval.csv, dataset.json).
    GenData {
        /// TOML data spec; defaults apply to omitted keys (and to all keys without a file).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint, run log and resolved config.
    Train {
        /// TOML run config with `train_data`, optional `eval_data`, `out_dir`, `arm` and a `[train]` table.
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `arm`.
        #[arg(long)]
        arm: Option<ArmName>,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a dataset with a checkpoint along its serving path.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Metrics report of a baseline run; adds RelaImpr entries.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate several arms over several seeds.
    Ablate {
        /// TOML sweep config; defaults apply to omitted keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        arms: Option<Vec<ArmName>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Eval missingness rates to sweep.
        #[arg(long, value_delimiter = ',')]
        missing_rates: Option<Vec<f64>>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize sweep CSVs into a table and charts.
    Report {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Process exit code for an error class.
pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numeric => 3,
    }
}

fn spec_from(path: Option<&Path>) -> Result<SynthSpec> {
    match path {
        Some(p) => load_toml(p),
        None => Ok(SynthSpec::default()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { spec, out } => {
            let spec = spec_from(spec.as_deref())?;
            let s = commands::gen_data(&spec, &out)?;
            println!(
                "wrote {} train / {} eval rows to {} (config {})",
                s.train_rows,
                s.eval_rows,
                out.display(),
                s.config_hash
            );
        }
        Command::Train {
            config,
            out,
            arm,
            seed,
            resume,
        } => {
            let mut run = TrainRun::load(&config)?;
            if let Some(o) = out {
                run.out_dir = o;
            }
            if arm.is_some() {
                run.arm = arm;
            }
            if let Some(s) = seed {
                run.train.seed = s;
            }
            let s = commands::train(&run, resume.as_deref())?;
            println!("trained {} steps; params sha256 {}", s.steps, s.params_sha256);
            if let Some(m) = s.metrics {
                println!("eval auc {:.5} uauc {:.5} logloss {:.5}", m.auc, m.uauc, m.logloss);
            }
        }
        Command::Evaluate {
            checkpoint,
            data,
            baseline,
            out,
        } => {
            let r = commands::evaluate(&checkpoint, &data, baseline.as_deref())?;
            match out {
                Some(p) => fs::write(p, r.to_json())?,
                None => print!("{}", r.to_json()),
            }
        }
        Command::Ablate {
            config,
            arms,
            seeds,
            missing_rates,
            jobs,
            out,
        } => {
            let mut run = match &config {
                Some(p) => SweepRun::load(p)?,
                None => SweepRun::default(),
            };
            if let Some(a) = arms {
                run.arms = a;
            }
            if let Some(s) = seeds {
                run.seeds = s;
            }
            if let Some(r) = missing_rates {
                run.missing_rates = r;
            }
            if let Some(o) = out {
                run.out_dir = o;
            }
            let rows = sweep::ablate(&run, jobs)?;
            println!(
                "wrote {} rows to {}",
                rows.len(),
                run.out_dir.join(sweep::SWEEP_CSV).display()
            );
        }
        Command::Report { inputs, out } => {
            let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
            let files = sweep::report(&refs, &out)?;
            println!("wrote {} to {}", files.join(", "), out.display());
        }
    }
    Ok(())
}
