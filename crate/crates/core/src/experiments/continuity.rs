use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{num, Check, ExperimentConfig, Outcome, Table};
use crate::domain::PlanarDomain;
use crate::error::Result;
use crate::lamination::{continuity_experiment, ContinuityRow, SampleConfig};
use crate::qd::QuadDiff;
use crate::svg::Canvas;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub name: String,
    pub i_limit: f64,
    pub rows: Vec<ContinuityRow>,
    /// Closed-form `i_n` for each row.
    pub oracle: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityTables {
    pub tilt: Sequence,
    pub scaled: Sequence,
}

/// `e^{i/n} dz²` and `(1 + 1/n) dz²` against `−dz²` on the unit square for
/// `n = 1..=terms`.
pub fn continuity_tables(terms: usize, cfg: &SampleConfig, tol: f64) -> Result<ContinuityTables> {
    let sq = PlanarDomain::unit_square();
    let limit = QuadDiff::constant(Complex64::new(1.0, 0.0), sq.clone());
    let psi = QuadDiff::constant(Complex64::new(-1.0, 0.0), sq.clone());
    let build = |name: &str, c: &dyn Fn(f64) -> Complex64, oracle: &dyn Fn(f64) -> f64| -> Result<Sequence> {
        let seq: Vec<QuadDiff> = (1..=terms).map(|n| QuadDiff::constant(c(n as f64), sq.clone())).collect();
        let (i_limit, rows) = continuity_experiment(&seq, &limit, &psi, cfg, tol)?;
        Ok(Sequence { name: name.into(), i_limit, rows, oracle: (1..=terms).map(|n| oracle(n as f64)).collect() })
    };
    Ok(ContinuityTables {
        tilt: build("tilt", &|n| Complex64::from_polar(1.0, 1.0 / n), &|n| (0.5 / n).cos())?,
        scaled: build("scaled", &|n| Complex64::new(1.0 + 1.0 / n, 0.0), &|n| (1.0 + 1.0 / n).sqrt())?,
    })
}

fn decreasing(rows: &[ContinuityRow]) -> bool {
    rows.windows(2).all(|w| w[1].gap < w[0].gap)
}

fn oracle_gap(s: &Sequence) -> f64 {
    s.rows.iter().zip(&s.oracle).map(|(r, o)| (r.i_n - o).abs()).fold(0.0, f64::max)
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let terms = cfg.count.unwrap_or(16);
    let tol = cfg.tol.unwrap_or(1e-9);
    let sc = SampleConfig { samples: cfg.samples.unwrap_or(1600), budget: cfg.budget.unwrap_or(50.0), ..Default::default() };
    let t = continuity_tables(terms, &sc, tol)?;
    let mut csv = Table::new(&["sequence", "n", "l1_distance", "i_n", "i_error", "oracle", "gap"]);
    for s in [&t.tilt, &t.scaled] {
        for (r, o) in s.rows.iter().zip(&s.oracle) {
            csv.row(&[s.name.clone(), r.n.to_string(), num(r.l1_distance), num(r.i_n), num(r.i_error), num(*o), num(r.gap)]);
        }
    }

    let mut c = Canvas::new(crate::quadrature::Rect::new(0.0, terms as f64, 0.0, 1.0), 480.0);
    let peak = t.scaled.rows.iter().chain(&t.tilt.rows).map(|r| r.gap).fold(1e-300, f64::max);
    for (s, color) in [(&t.tilt, "#4477aa"), (&t.scaled, "#cc6677")] {
        let pts: Vec<Complex64> = s.rows.iter().map(|r| Complex64::new(r.n as f64, r.gap / peak)).collect();
        c.polyline(&pts, color, 1.2);
    }

    let last = |s: &Sequence| s.rows.last().map_or(f64::INFINITY, |r| r.gap);
    let checks = vec![
        Check::holds("tilt gap decreasing", decreasing(&t.tilt.rows)),
        Check::holds("scaled gap decreasing", decreasing(&t.scaled.rows)),
        Check::at_most("tilt gap at last n", last(&t.tilt), 1e-2),
        Check::at_most("scaled gap at last n", last(&t.scaled), 1e-2),
        Check::at_most("scaled i_n vs sqrt(1+1/n)", oracle_gap(&t.scaled), 1e-3),
    ];
    let summary = json!({
        "tables": t,
        "achieved": {
            "tilt_last_gap": last(&t.tilt),
            "scaled_last_gap": last(&t.scaled),
            "scaled_oracle_gap": oracle_gap(&t.scaled),
            "tilt_oracle_gap": oracle_gap(&t.tilt),
            "samples": sc.samples,
        },
    });
    Ok(Outcome { id: cfg.experiment.clone(), summary, checks, csv: csv.finish(), svg: Some(c.finish()) })
}
