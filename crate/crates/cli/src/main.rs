use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use confal::analysis::{curve_csv, estimates_csv};
use confal::experiment::{report_json, runs_csv, with_workers, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "confal", version, about = "Seeded active-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured learner for every trial.
    Run(Common),
    /// Minimum-abstention estimates over the [estimate] grid.
    EstimatePhi(Common),
    /// Disagreement-coefficient estimates over the [estimate] radii.
    EstimateTheta(Common),
    /// Label counts against eps for each [curve] strategy.
    Curve(Common),
    /// Recompute every CSV in --out and compare byte for byte.
    Replay(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the number of processors.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

/// Failure with the exit status it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn config_error(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, err: err.into() }
}

fn run_error(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, err: err.into() }
}

fn load(c: &Common) -> Result<Experiment, Failure> {
    let mut cfg = ExperimentConfig::load(&c.config)
        .with_context(|| format!("invalid config {}", c.config.display()))
        .map_err(config_error)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let base = c.config.parent().unwrap_or(Path::new("."));
    Experiment::new(cfg, base).context("invalid experiment").map_err(config_error)
}

const OUTPUTS: [&str; 4] = ["runs.csv", "phi.csv", "theta.csv", "curve.csv"];

/// The CSV a subcommand writes and whether every cell succeeded.
fn produce(exp: &Experiment, name: &str) -> Result<(String, bool), Failure> {
    match name {
        "runs.csv" => {
            let results = exp.run_trials();
            let ok = results.iter().all(|r| r.report.is_ok());
            Ok((runs_csv(&results), ok))
        }
        "phi.csv" => Ok((estimates_csv(&exp.estimate_phi().map_err(run_error)?), true)),
        "theta.csv" => Ok((estimates_csv(&exp.estimate_theta().map_err(run_error)?), true)),
        _ => {
            let rows = exp.curve().map_err(run_error)?;
            let ok = rows.iter().all(|r| r.failures == 0);
            Ok((curve_csv(&rows), ok))
        }
    }
}

fn write(out: &Path, name: &str, text: &str) -> Result<(), Failure> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).map_err(run_error)?;
    let path = out.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display())).map_err(run_error)
}

fn workers<T: Send>(c: &Common, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    with_workers(c.workers, f).map_err(config_error)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(c) => {
            let exp = load(&c)?;
            let results = workers(&c, || exp.run_trials())?;
            write(&c.out, "runs.csv", &runs_csv(&results))?;
            let mut failed = 0;
            for r in &results {
                match &r.report {
                    Ok(rep) => write(&c.out, &format!("trial_{}.json", r.trial), &report_json(rep))?,
                    Err(e) => {
                        failed += 1;
                        eprintln!("trial {} (seed {}) failed: {e}", r.trial, r.seed);
                    }
                }
            }
            if failed > 0 {
                return Err(run_error(anyhow::anyhow!("{failed} of {} trials failed", results.len())));
            }
            Ok(())
        }
        Command::EstimatePhi(c) => single(&c, "phi.csv"),
        Command::EstimateTheta(c) => single(&c, "theta.csv"),
        Command::Curve(c) => single(&c, "curve.csv"),
        Command::Replay(c) => {
            let exp = load(&c)?;
            let present: Vec<&str> = OUTPUTS.into_iter().filter(|n| c.out.join(n).is_file()).collect();
            if present.is_empty() {
                return Err(config_error(anyhow::anyhow!("no CSV output found in {}", c.out.display())));
            }
            let mut differ = Vec::new();
            for name in present {
                let old = fs::read(c.out.join(name)).with_context(|| format!("reading {name}")).map_err(run_error)?;
                let (new, _) = workers(&c, || produce(&exp, name))??;
                if old == new.as_bytes() {
                    println!("{name}: identical");
                } else {
                    println!("{name}: differs");
                    differ.push(name);
                }
            }
            if differ.is_empty() {
                Ok(())
            } else {
                Err(run_error(anyhow::anyhow!("replay mismatch in {}", differ.join(", "))))
            }
        }
    }
}

fn single(c: &Common, name: &str) -> Result<(), Failure> {
    let exp = load(c)?;
    let (text, ok) = workers(c, || produce(&exp, name))??;
    write(&c.out, name, &text)?;
    if ok {
        Ok(())
    } else {
        Err(run_error(anyhow::anyhow!("some cells failed; see {}", c.out.join(name).display())))
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
