use serde_json::json;

use super::{num, Check, ExperimentConfig, Outcome, Table};
use crate::conformal::crossing::{horizontal_lamination, square_model, thm62_experiment, CrossingReport};
use crate::error::Result;
use crate::svg::Canvas;

pub fn crossing_report(grid_n: usize, samples: usize) -> Result<CrossingReport> {
    let (j1, j2, amb) = square_model()?;
    thm62_experiment(&j1, &j2, &amb, grid_n, samples)
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid_n = cfg.grid.unwrap_or(64);
    let samples = cfg.samples.unwrap_or(200);
    let r = crossing_report(grid_n, samples)?;
    let mut t = Table::new(&["quadrilateral", "height", "height_dual", "height_refined"]);
    t.row(&["J1".into(), num(r.v1), num(r.v1_dual), num(r.v1_refined)]);
    t.row(&["J2".into(), num(r.v2), num(r.v2_dual), num(r.v2_refined)]);

    let (j1, j2, amb) = square_model()?;
    let mut c = Canvas::for_domain(&amb, 480.0);
    c.polygon(&j1.domain.vertices_c(), "#4477aa", 0.25);
    c.polygon(&j2.domain.vertices_c(), "#cc6677", 0.25);
    for (q, v, color) in [(&j1, r.v1_dual, "#224488"), (&j2, r.v2_dual, "#882233")] {
        let lam = horizontal_lamination(q, &amb, grid_n, 16, v)?;
        for l in &lam.leaves {
            c.polyline(&[amb.boundary_point(l.a), amb.boundary_point(l.b)], color, 0.8);
        }
    }

    let checks = vec![
        Check::holds("boundaries cross in four points", r.boundary_crossings == 4),
        Check::at_most("|i - v1 v2|", r.gap, 1e-2),
        Check::at_most("height change under grid doubling", r.stability, 1e-3),
    ];
    Ok(Outcome {
        id: cfg.experiment.clone(),
        summary: json!({ "report": r, "achieved": { "gap": r.gap, "stability": r.stability } }),
        checks,
        csv: t.finish(),
        svg: Some(c.finish()),
    })
}
