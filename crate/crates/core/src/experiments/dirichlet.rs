use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{num, Check, ExperimentConfig, Outcome, Table};
use crate::domain::PlanarDomain;
use crate::error::Result;
use crate::foliation::{competitor_catalog, Diffeo, PartialFoliation};
use crate::svg::Canvas;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletRow {
    pub competitor: Diffeo,
    pub dirichlet: f64,
}

/// `D` of the pushed-forward `dz²` foliation for the identity followed by
/// `count` seeded competitors.
pub fn dirichlet_catalog(seed: u64, count: usize, tol: f64) -> Result<Vec<DirichletRow>> {
    let base = PartialFoliation::horizontal(PlanarDomain::unit_square());
    std::iter::once(Diffeo::Identity)
        .chain(competitor_catalog(seed, count))
        .map(|h| Ok(DirichletRow { dirichlet: base.pushforward(h)?.dirichlet_integral(tol)?, competitor: h }))
        .collect()
}

fn label(h: &Diffeo) -> String {
    match h {
        Diffeo::Identity => "identity".into(),
        Diffeo::YShear { a } => format!("y-shear a={a:.6}"),
        Diffeo::XShear { a } => format!("x-shear a={a:.6}"),
        Diffeo::RadialSqueeze { center, radius, a } => format!("squeeze c=({:.6} {:.6}) r={radius:.6} a={a:.6}", center[0], center[1]),
    }
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tol.unwrap_or(1e-9);
    let rows = dirichlet_catalog(cfg.seed, cfg.count.unwrap_or(10), tol)?;
    let mut t = Table::new(&["competitor", "dirichlet", "excess"]);
    for r in &rows {
        t.row(&[label(&r.competitor), num(r.dirichlet), num(r.dirichlet - 1.0)]);
    }

    let mut c = Canvas::for_domain(&PlanarDomain::unit_square(), 480.0);
    if let Some(h) = rows.iter().map(|r| &r.competitor).find(|h| matches!(h, Diffeo::RadialSqueeze { .. })) {
        for k in 1..20 {
            let y = k as f64 / 20.0;
            let pts: Vec<Complex64> = (0..=64).map(|j| h.forward(Complex64::new(j as f64 / 64.0, y))).collect();
            c.polyline(&pts, "#4477aa", 0.8);
        }
    }

    let identity = rows[0].dirichlet;
    let least = rows[1..].iter().map(|r| r.dirichlet).fold(f64::INFINITY, f64::min);
    let checks = vec![Check::at_most("|D(identity) - 1|", (identity - 1.0).abs(), 1e-6), Check::at_least("min D(competitor)", least, 1.0 - 1e-6)];
    Ok(Outcome {
        id: cfg.experiment.clone(),
        summary: json!({
            "norm": 1.0,
            "rows": rows,
            "achieved": { "identity_gap": (identity - 1.0).abs(), "min_excess": least - 1.0, "quadrature_tol": tol },
        }),
        checks,
        csv: t.finish(),
        svg: Some(c.finish()),
    })
}
