use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{num, Check, ExperimentConfig, Outcome, Table};
use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use crate::qd::QuadDiff;
use crate::svg::Canvas;
use crate::trajectory::{Classification, TraceOptions, Tracer, Trajectory};

pub const DISK_CATALOG: [&str; 6] = [
    "(dz2)",
    "(mul (const 0 1) (dz2))",
    "(mul (z) (dz2))",
    "(mul (add (pow (z) 2 1) (const 0.25 0)) (dz2))",
    "(mul (sub (z) (const 2 0)) (dz2))",
    "(mul (exp (z)) (dz2))",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfinementRow {
    pub phi: String,
    pub r: f64,
    /// Largest Euclidean distance from 0 to the nearest point of the
    /// geodesic joining the endpoints of a leaf through `𝔻_r`.
    pub big_r: f64,
    pub crosscuts: usize,
    pub other: usize,
}

/// Euclidean distance from 0 to the hyperbolic geodesic joining `a` and `b`
/// on the unit circle.
pub fn geodesic_depth(a: Complex64, b: Complex64) -> f64 {
    let sep = (a.arg() - b.arg()).rem_euclid(std::f64::consts::TAU);
    let half = 0.5 * sep.min(std::f64::consts::TAU - sep);
    let c = half.cos();
    if c <= 1e-15 {
        0.0
    } else {
        ((1.0 - half.sin()) / c).clamp(0.0, 1.0)
    }
}

fn starts(r: f64) -> Vec<Complex64> {
    (1..=4)
        .flat_map(|k| {
            let rad = r * k as f64 / 4.0;
            (0..16).map(move |j| Complex64::from_polar(rad, std::f64::consts::TAU * (j as f64 + 0.5 * (k % 2) as f64) / 16.0))
        })
        .collect()
}

fn leaves(qd: &QuadDiff, r: f64, budget: f64) -> Result<Vec<Trajectory>> {
    let tracer = Tracer::new(qd, TraceOptions::with_step_tol(1e-9))?;
    let traced: Vec<Result<Trajectory>> = starts(r).par_iter().map(|z| tracer.trace(*z, budget)).collect();
    let mut out = Vec::new();
    for t in traced {
        match t {
            Ok(t) => out.push(t),
            Err(Error::StartAtZero) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn row(src: &str, r: f64, budget: f64) -> Result<ConfinementRow> {
    let qd = QuadDiff::parse(src, PlanarDomain::unit_disk())?;
    let mut big_r: f64 = 0.0;
    let (mut crosscuts, mut other) = (0, 0);
    for t in leaves(&qd, r, budget)? {
        if let Classification::CrossCut { a, b } = t.classification {
            big_r = big_r.max(geodesic_depth(Complex64::new(a[0], a[1]), Complex64::new(b[0], b[1])));
            crosscuts += 1;
        } else {
            other += 1;
        }
    }
    Ok(ConfinementRow { phi: src.into(), r, big_r, crosscuts, other })
}

pub fn confinement_table(catalog: &[&str], radii: &[f64], budget: f64) -> Result<Vec<ConfinementRow>> {
    catalog.iter().flat_map(|src| radii.iter().map(move |&r| row(src, r, budget))).collect()
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let budget = cfg.budget.unwrap_or(50.0);
    let radii = [0.25, 0.5, 0.75];
    let rows = confinement_table(&DISK_CATALOG, &radii, budget)?;
    let mut t = Table::new(&["phi", "r", "R", "crosscuts", "other"]);
    for r in &rows {
        t.row(&[r.phi.clone(), num(r.r), num(r.big_r), r.crosscuts.to_string(), r.other.to_string()]);
    }

    let disk = PlanarDomain::unit_disk();
    let mut c = Canvas::for_domain(&disk, 480.0);
    let qd = QuadDiff::parse(DISK_CATALOG[2], disk.clone())?;
    for l in leaves(&qd, 0.5, budget)? {
        c.polyline(&l.points_c(), "#4477aa", 0.7);
    }
    let circle = |rad: f64| (0..=128).map(|k| Complex64::from_polar(rad, std::f64::consts::TAU * k as f64 / 128.0)).collect::<Vec<_>>();
    c.polyline(&circle(0.5), "#cc6677", 1.2);
    if let Some(row) = rows.iter().find(|r| r.phi == DISK_CATALOG[2] && r.r == 0.5) {
        c.polyline(&circle(row.big_r), "#228833", 1.2);
    }

    let worst = rows.iter().map(|r| r.big_r).fold(0.0, f64::max);
    let checks = vec![
        Check::at_most("largest R", worst, 1.0 - 1e-6),
        Check::holds("every row has cross-cut leaves", rows.iter().all(|r| r.crosscuts > 0)),
    ];
    Ok(Outcome {
        id: cfg.experiment.clone(),
        summary: json!({ "rows": rows, "achieved": { "largest_R": worst } }),
        checks,
        csv: t.finish(),
        svg: Some(c.finish()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geodesic_depth_examples() {
        let e = |deg: f64| Complex64::from_polar(1.0, deg.to_radians());
        assert!(geodesic_depth(e(0.0), e(180.0)) < 1e-12);
        // endpoints at ±45°: the geodesic crosses the real axis at √2 − 1
        assert!((geodesic_depth(e(45.0), e(-45.0)) - (2f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!(geodesic_depth(e(10.0), e(10.0)) > 1.0 - 1e-12);
    }
}
