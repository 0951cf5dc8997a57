use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qdlab_core::experiments::{error_json, pretty, run, ExperimentConfig, REGISTRY};

/// Runs a registered quadratic-differential experiment and writes its CSV,
/// SVG and JSON artifacts.
#[derive(Debug, Parser)]
#[command(name = "qdlab", version, after_help = "experiments: example-4-2, example-6-1, thm-6-2, minsky-suite, continuity, dirichlet, confinement")]
struct Args {
    /// Experiment id.
    experiment: String,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Size of randomized catalogs and sequence lengths.
    #[arg(long)]
    count: Option<usize>,
    /// Comma-separated sequence indices.
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// JSON config; its fields override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn config(a: &Args) -> Result<ExperimentConfig, String> {
    let flags = ExperimentConfig {
        experiment: a.experiment.clone(),
        grid: a.grid,
        samples: a.samples,
        budget: a.budget,
        tol: a.tol,
        seed: a.seed,
        out: Some(a.out.clone()),
        ns: a.ns.clone(),
        count: a.count,
    };
    match &a.config {
        None => Ok(flags),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            let file = ExperimentConfig::from_json(&text).map_err(|e| format!("{}: {e}", p.display()))?;
            Ok(flags.overlay(file))
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qdlab: {e}");
            return ExitCode::from(2);
        }
    };
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    if !REGISTRY.contains(&cfg.experiment.as_str()) {
        eprintln!("qdlab: unknown experiment `{}`; registered: {}", cfg.experiment, REGISTRY.join(", "));
        return ExitCode::from(2);
    }
    match run(&cfg) {
        Ok(outcome) => {
            if let Err(e) = outcome.write(&out) {
                eprintln!("qdlab: writing artifacts: {e}");
                return ExitCode::from(2);
            }
            for c in &outcome.checks {
                println!("{} {}: {:e} (limit {:e})", if c.passed { "ok  " } else { "FAIL" }, c.invariant, c.measured, c.limit);
            }
            println!("{} -> {}", outcome.id, out.display());
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let doc = error_json(&cfg.experiment, &e);
            let path = out.join(format!("{}.failure.json", cfg.experiment));
            if std::fs::create_dir_all(&out).and_then(|_| std::fs::write(&path, pretty(&doc))).is_err() {
                eprintln!("qdlab: could not write {}", path.display());
            }
            eprintln!("qdlab: {e}");
            ExitCode::from(1)
        }
    }
}
