use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use spedkrig::harness::{self, evaluate, fit_dataset, Dataset, RunConfig};
use spedkrig::mimic::{optimize, MimicConfig, MimicProblem};
use spedkrig::{Error, Result, TrainedEmulator};

#[derive(Parser)]
#[command(name = "spedkrig", version, about = "Spectral-distance co-kriging emulator for stress-strain curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample training (LHS) and test (Sobol) designs and run the synthetic oracle.
    Gen {
        #[arg(long, default_value_t = 58)]
        n: usize,
        #[arg(long = "test-n", default_value_t = 18)]
        test_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Structure grid points.
        #[arg(long, default_value_t = 81)]
        p: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit an emulator; the fit trace goes next to the model as `*.trace.json`.
    Fit {
        #[arg(long)]
        train: PathBuf,
        /// TOML (or .json) run configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predictive mean and pointwise band for each design in a designs CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        designs: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        level: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on a test set (`test_*.csv`, or plain files, in DIR).
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        level: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find a structure whose predicted response matches a target curve.
    Mimic {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 32)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen { n, test_n, seed, p, out } => {
            let (train, test) = harness::generate(n, test_n, seed, p)?;
            train.write_dir(&out, "")?;
            test.write_dir(&out, "test_")?;
            println!("wrote {} training and {} test runs to {}", train.len(), test.len(), out.display());
        }
        Command::Fit { train, config, out } => {
            let cfg = match config {
                Some(path) => RunConfig::load(&path)?,
                None => RunConfig::default(),
            };
            let data = Dataset::read_dir(&train, "")?;
            let (model, report) = fit_dataset(&data, &cfg)?;
            model.save(&out)?;
            let trace_path = harness::sibling(&out, ".trace");
            harness::write_json(&trace_path, &report)?;
            let best = report.trace.best();
            println!(
                "objective {:.6} after {} sweeps (restart {}), {} active frequencies; model {}, trace {}",
                model.metadata.objective,
                best.objectives.len().saturating_sub(1),
                report.trace.best_restart,
                best.active_frequencies,
                out.display(),
                trace_path.display()
            );
        }
        Command::Predict { model, designs, level, out } => {
            let model = TrainedEmulator::load(&model)?;
            let designs = harness::read_designs(&designs)?;
            let preds = designs.par_iter().map(|d| model.predict(d)).collect::<Result<Vec<_>>>()?;
            harness::write_predictions(&out, model.grid(), &preds, level)?;
            println!("wrote {} predictions to {}", preds.len(), out.display());
        }
        Command::Eval { model, test, level, out } => {
            let model = TrainedEmulator::load(&model)?;
            let data = read_test_dir(&test)?;
            if data.grid != *model.grid() {
                return Err(Error::InvalidInput("test strain grid differs from the model's".into()));
            }
            let report = evaluate(&model, &data.designs, &data.responses, level)?;
            harness::write_json(&out, &report)?;
            println!(
                "median MARE {:.4}, classification {}/{}, {}/{} curves covered",
                report.median_mare, report.classification_correct, report.n, report.covered_curves, report.n
            );
        }
        Command::Mimic { model, target, starts, seed, out } => {
            let model = TrainedEmulator::load(&model)?;
            let (grid, target) = harness::read_target(&target)?;
            if grid != *model.grid() {
                return Err(Error::InvalidInput("target strain levels differ from the model's grid".into()));
            }
            let cfg = MimicConfig { starts, seed, ..Default::default() };
            let problem = MimicProblem::new(&model, &target, cfg.modulus_headroom)?;
            let result = optimize(&problem, &cfg)?;
            harness::write_json(&out, &result.summary(problem.active_set()))?;
            let curve_path = harness::sibling(&out, ".structure").with_extension("csv");
            harness::write_curve(&curve_path, result.reconstructed.values(), result.reconstructed.spacing())?;
            println!(
                "diameter {:.4} mm, objective {:.6}; summary {}, structure {}",
                result.diameter,
                result.objective,
                out.display(),
                curve_path.display()
            );
        }
    }
    Ok(())
}

fn read_test_dir(dir: &Path) -> Result<Dataset> {
    if dir.join("test_designs.csv").exists() {
        Dataset::read_dir(dir, "test_")
    } else {
        Dataset::read_dir(dir, "")
    }
}
