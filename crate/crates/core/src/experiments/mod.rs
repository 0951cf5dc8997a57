//! Registered experiments: each builds its inputs, runs the computation,
//! checks its invariants and renders CSV, SVG and a JSON summary.

mod confinement;
mod continuity;
mod crossing;
mod dirichlet;
mod kernel;
mod minsky;
mod punctured;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub use confinement::{confinement_table, geodesic_depth, ConfinementRow, DISK_CATALOG};
pub use continuity::{continuity_tables, ContinuityTables, Sequence};
pub use crossing::crossing_report;
pub use dirichlet::{dirichlet_catalog, DirichletRow};
pub use kernel::{kernel_tables, KernelRow, KernelTables};
pub use minsky::{minsky_catalog, minsky_suite, MinskyCase, MinskyRow};
pub use punctured::{punctured_report, punctured_square, strip_foliation, PuncturedReport};

pub const REGISTRY: [&str; 7] = ["example-4-2", "example-6-1", "thm-6-2", "minsky-suite", "continuity", "dirichlet", "confinement"];

/// Knobs shared by all experiments; unset values fall back to per-experiment
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub grid: Option<usize>,
    pub samples: Option<usize>,
    pub budget: Option<f64>,
    pub tol: Option<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Sequence indices where an experiment takes a list of `n`.
    pub ns: Option<Vec<usize>>,
    /// Size of randomized catalogs.
    pub count: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(id: &str) -> Self {
        ExperimentConfig { experiment: id.to_string(), ..Default::default() }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Fields set in `other` replace those here.
    pub fn overlay(mut self, other: ExperimentConfig) -> Self {
        if !other.experiment.is_empty() {
            self.experiment = other.experiment;
        }
        self.grid = other.grid.or(self.grid);
        self.samples = other.samples.or(self.samples);
        self.budget = other.budget.or(self.budget);
        self.tol = other.tol.or(self.tol);
        if other.seed != 0 {
            self.seed = other.seed;
        }
        self.out = other.out.or(self.out);
        self.ns = other.ns.or(self.ns);
        self.count = other.count.or(self.count);
        self
    }
}

/// One checked invariant with the value actually reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub invariant: String,
    pub measured: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(invariant: &str, measured: f64, limit: f64) -> Check {
        Check { invariant: invariant.into(), measured, limit, passed: measured <= limit }
    }

    pub fn at_least(invariant: &str, measured: f64, limit: f64) -> Check {
        Check { invariant: invariant.into(), measured, limit, passed: measured >= limit }
    }

    pub fn holds(invariant: &str, ok: bool) -> Check {
        Check { invariant: invariant.into(), measured: ok as u8 as f64, limit: 1.0, passed: ok }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: String,
    pub summary: Value,
    pub checks: Vec<Check>,
    pub csv: String,
    pub svg: Option<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violated(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn summary_json(&self) -> Value {
        json!({ "experiment": self.id, "passed": self.passed(), "checks": self.checks, "results": self.summary })
    }

    /// Writes `<id>.csv`, `<id>.json`, `<id>.svg` and, if a check failed,
    /// `<id>.failure.json`. Returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        let mut put = |name: String, body: &str| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, body)?;
            paths.push(p);
            Ok(())
        };
        put(format!("{}.csv", self.id), &self.csv)?;
        put(format!("{}.json", self.id), &pretty(&self.summary_json()))?;
        if let Some(svg) = &self.svg {
            put(format!("{}.svg", self.id), svg)?;
        }
        if !self.passed() {
            let v = json!({ "experiment": self.id, "violated": self.violated() });
            put(format!("{}.failure.json", self.id), &pretty(&v))?;
        }
        Ok(paths)
    }
}

/// Failure document for a run that stopped with an error.
pub fn error_json(id: &str, e: &Error) -> Value {
    let name = format!("{e:?}");
    let variant = name.split(['(', ' ', '{']).next().unwrap_or("Error").to_string();
    json!({ "experiment": id, "violated": [{ "invariant": variant, "message": e.to_string() }] })
}

pub fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value") + "\n"
}

/// CSV with a header row; values are written with full precision.
pub(crate) struct Table {
    text: String,
}

impl Table {
    pub(crate) fn new(columns: &[&str]) -> Table {
        Table { text: columns.join(",") + "\n" }
    }

    pub(crate) fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub(crate) fn finish(self) -> String {
        self.text
    }
}

pub(crate) fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Runs a registered experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment.as_str() {
        "example-4-2" => kernel::run(cfg),
        "example-6-1" => punctured::run(cfg),
        "thm-6-2" => crossing::run(cfg),
        "minsky-suite" => minsky::run(cfg),
        "continuity" => continuity::run(cfg),
        "dirichlet" => dirichlet::run(cfg),
        "confinement" => confinement::run(cfg),
        other => Err(Error::ConfigurationInvalid(format!("unknown experiment `{other}`; registered: {}", REGISTRY.join(", ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_overlay_and_json() {
        let base = ExperimentConfig { grid: Some(64), seed: 3, ..ExperimentConfig::new("thm-6-2") };
        let file = ExperimentConfig::from_json(r#"{"samples": 10, "seed": 5}"#).unwrap();
        let c = base.overlay(file);
        assert_eq!((c.experiment.as_str(), c.grid, c.samples, c.seed), ("thm-6-2", Some(64), Some(10), 5));
        assert!(ExperimentConfig::from_json(r#"{"grdi": 1}"#).is_err());
    }

    #[test]
    fn unknown_experiment_is_an_error() {
        let e = run(&ExperimentConfig::new("nope")).unwrap_err();
        assert_eq!(error_json("nope", &e)["violated"][0]["invariant"], "ConfigurationInvalid");
    }

    #[test]
    fn checks_compare_inclusively() {
        assert!(Check::at_most("x", 1.0, 1.0).passed);
        assert!(!Check::at_least("x", 0.5, 1.0).passed);
        assert!(!Check::holds("x", false).passed);
    }
}
