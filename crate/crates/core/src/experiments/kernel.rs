use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{num, Check, ExperimentConfig, Outcome, Table};
use crate::conformal::sc::map_by_name;
use crate::domain::PlanarDomain;
use crate::error::Result;
use crate::expr::Expr;
use crate::qd::{prefix_decays, sup_error, QuadDiff};
use crate::svg::Canvas;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub map: String,
    pub n: usize,
    pub norm: f64,
    pub norm_error: f64,
    pub l1_distance: f64,
    /// `sup |f_n(z) − z|` over the compact grid.
    pub sup_identity: f64,
    /// `sup |φ_n − dz²|` over the compact grid.
    pub sup_differential: f64,
    pub residual: f64,
    pub crowded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTables {
    pub arm: Vec<KernelRow>,
    pub sqrt_arm: Vec<KernelRow>,
}

fn compact_grid() -> Vec<Complex64> {
    let k = 16;
    (0..=k).flat_map(|i| (0..=k).map(move |j| Complex64::new(0.1 + 0.8 * i as f64 / k as f64, 0.1 + 0.8 * j as f64 / k as f64))).collect()
}

fn row(prefix: &str, n: usize, tol: f64) -> Result<KernelRow> {
    let name = format!("{prefix}{n}");
    let map = map_by_name(&name)?;
    let phi = QuadDiff::pullback(&name, Expr::Dz2)?;
    let flat = QuadDiff::parse("(dz2)", PlanarDomain::unit_square())?;
    let norm = phi.l1_norm_estimate(tol)?;
    let pts = compact_grid();
    let mut sup_identity: f64 = 0.0;
    for z in &pts {
        sup_identity = sup_identity.max((map.eval(*z)?.0 - z).norm());
    }
    Ok(KernelRow {
        map: name,
        n,
        norm: norm.value,
        norm_error: norm.error,
        l1_distance: phi.l1_distance(&flat, tol)?,
        sup_identity,
        sup_differential: sup_error(&phi, &flat, &pts)?,
        residual: map.report.residual,
        crowded: map.report.crowded,
    })
}

/// Rows for `f_n` over `ns` and for the `√n` arms over `sqrt_ns`.
pub fn kernel_tables(ns: &[usize], sqrt_ns: &[usize], tol: f64) -> Result<KernelTables> {
    Ok(KernelTables {
        arm: ns.iter().map(|&n| row("f", n, tol)).collect::<Result<_>>()?,
        sqrt_arm: sqrt_ns.iter().map(|&n| row("s", n, tol)).collect::<Result<_>>()?,
    })
}

fn grid_image(name: &str) -> Result<String> {
    let map = map_by_name(name)?;
    let mut c = Canvas::for_domain(&map.target, 480.0);
    let inner = |x: f64| x.clamp(1e-3, 1.0 - 1e-3);
    for k in 0..=10 {
        let t = inner(k as f64 / 10.0);
        for line in [[Complex64::new(t, 0.0), Complex64::new(0.0, 1.0)], [Complex64::new(0.0, t), Complex64::new(1.0, 0.0)]] {
            let pts = (0..=40).map(|j| map.eval(line[0] + line[1] * inner(j as f64 / 40.0)).map(|p| p.0)).collect::<Result<Vec<_>>>()?;
            c.polyline(&pts, "#4477aa", 0.8);
        }
    }
    Ok(c.finish())
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ns = cfg.ns.clone().unwrap_or_else(|| vec![2, 4, 8, 16]);
    let tol = cfg.tol.unwrap_or(1e-6);
    let sqrt_ns = [4, 16, 64];
    let t = kernel_tables(&ns, &sqrt_ns, tol)?;
    let mut csv = Table::new(&["map", "n", "norm", "norm_error", "l1_distance", "sup_identity", "sup_differential", "residual", "crowded"]);
    for r in t.arm.iter().chain(&t.sqrt_arm) {
        csv.row(&[
            r.map.clone(),
            r.n.to_string(),
            num(r.norm),
            num(r.norm_error),
            num(r.l1_distance),
            num(r.sup_identity),
            num(r.sup_differential),
            num(r.residual),
            r.crowded.to_string(),
        ]);
    }

    let mut checks = Vec::new();
    for r in t.arm.iter().filter(|r| r.n <= 8) {
        checks.push(Check::at_most(&format!("|norm f{} - 2|", r.n), (r.norm - 2.0).abs(), 0.02));
    }
    let min_l1 = t.arm.iter().map(|r| r.l1_distance).fold(f64::INFINITY, f64::min);
    checks.push(Check::at_least("min L1 distance to dz2", min_l1, 0.9));
    let sups: Vec<f64> = t.arm.iter().map(|r| r.sup_identity).collect();
    checks.push(Check::holds("sup |f_n - id| strictly decreasing", sups.windows(2).all(|w| w[1] < w[0])));
    let worst_sqrt = t.sqrt_arm.iter().map(|r| ((r.norm - 1.0) - (1.0 / (r.n as f64).sqrt() - 1.0 / r.n as f64)).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("sqrt arm norm excess vs 1/sqrt(n) - 1/n", worst_sqrt, 1e-2));
    let l1s: Vec<f64> = t.sqrt_arm.iter().map(|r| r.l1_distance).collect();
    checks.push(Check::holds("sqrt arm L1 distance decreasing", l1s.windows(2).all(|w| w[1] < w[0])));

    let sup_phi: Vec<f64> = t.arm.iter().map(|r| r.sup_differential).collect();
    let summary = json!({
        "tables": t,
        "locally_uniform": prefix_decays(&sup_phi, tol),
        "l1_convergent": prefix_decays(&t.arm.iter().map(|r| r.l1_distance).collect::<Vec<_>>(), tol),
        "sqrt_l1_convergent": prefix_decays(&l1s, tol),
        "achieved": {
            "norm_gap": t.arm.iter().filter(|r| r.n <= 8).map(|r| (r.norm - 2.0).abs()).fold(0.0, f64::max),
            "sqrt_norm_gap": worst_sqrt,
            "min_l1_distance": min_l1,
            "max_residual": t.arm.iter().chain(&t.sqrt_arm).map(|r| r.residual).fold(0.0, f64::max),
        },
    });
    let svg = grid_image(&format!("f{}", ns.first().copied().unwrap_or(2)))?;
    Ok(Outcome { id: cfg.experiment.clone(), summary, checks, csv: csv.finish(), svg: Some(svg) })
}
