use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{num, Check, ExperimentConfig, Outcome, Table};
use crate::domain::PlanarDomain;
use crate::error::Result;
use crate::foliation::{Chart, ClassSpec, Height, PartialFoliation};
use crate::lamination::{intersection_between, IntersectionEstimate, LeafSource, SampleConfig};
use crate::qd::QuadDiff;
use crate::quadrature::Rect;
use crate::svg::Canvas;

/// `[-½,½]²` punctured at `±(½ − 1/n)` for `n = 3..8`; punctures `2k` and
/// `2k+1` are mirror images.
pub fn punctured_square() -> Result<PlanarDomain> {
    let pts: Vec<[f64; 2]> = (3..=8)
        .flat_map(|n| {
            let a = 0.5 - 1.0 / n as f64;
            [[a, 0.0], [-a, 0.0]]
        })
        .collect();
    PlanarDomain::rectangle(-0.5, 0.5, -0.5, 0.5)?.with_punctures(pts)
}

/// Horizontal foliation of the strip `y ∈ [¼, ½]`.
pub fn strip_foliation(x: &PlanarDomain) -> Result<PartialFoliation> {
    PartialFoliation::new(x.clone(), vec![Chart::affine(Rect::new(-0.5, 0.5, 0.25, 0.5), 0.0, 1.0, 0.0)])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PuncturedReport {
    pub intersection: IntersectionEstimate,
    /// `(label, class, height)` for every enclosing-cycle class.
    pub heights: Vec<(String, ClassSpec, Height)>,
}

fn classes(count: usize) -> Vec<(String, ClassSpec)> {
    let mut out: Vec<(String, ClassSpec)> = (0..count).map(|k| (format!("p{k}"), ClassSpec::Cycle { punctures: vec![k] })).collect();
    for k in (0..count).step_by(2) {
        out.push((format!("p{k}+p{}", k + 1), ClassSpec::Cycle { punctures: vec![k, k + 1] }));
    }
    out.push(("all".into(), ClassSpec::Cycle { punctures: (0..count).collect() }));
    out
}

pub fn punctured_report(grid_n: usize, samples: usize) -> Result<PuncturedReport> {
    let x = punctured_square()?;
    let strip = strip_foliation(&x)?;
    let phi = QuadDiff::parse("(mul (const -1 0) (dz2))", x.clone())?;
    let cfg = SampleConfig { samples, ..Default::default() };
    let intersection = intersection_between(&LeafSource::Differential(phi), &LeafSource::Foliation(strip.clone()), &cfg)?;
    let heights = classes(x.punctures.len())
        .into_iter()
        .map(|(label, class)| {
            let h = strip.height(&class, grid_n)?;
            Ok((label, class, h))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PuncturedReport { intersection, heights })
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid_n = cfg.grid.unwrap_or(128);
    let r = punctured_report(grid_n, cfg.samples.unwrap_or(200))?;
    let mut t = Table::new(&["class", "punctures", "height", "grid_n"]);
    for (label, class, h) in &r.heights {
        let ClassSpec::Cycle { punctures } = class else { continue };
        let p: Vec<String> = punctures.iter().map(|k| k.to_string()).collect();
        t.row(&[label.clone(), p.join(" "), num(h.value), h.grid_n.to_string()]);
    }

    let x = punctured_square()?;
    let mut c = Canvas::for_domain(&x, 480.0);
    let strip = [(-0.5, 0.25), (0.5, 0.25), (0.5, 0.5), (-0.5, 0.5)].map(|(a, b)| Complex64::new(a, b));
    c.polygon(&strip, "#4477aa", 0.3);
    for (_, class, h) in &r.heights {
        if matches!(class, ClassSpec::Cycle { punctures } if punctures.len() == 2) {
            let pts: Vec<Complex64> = h.representative.iter().map(|p| Complex64::new(p[0], p[1])).collect();
            c.polyline(&pts, "#cc6677", 1.0);
        }
    }

    let worst = r.heights.iter().map(|h| h.2.value).fold(0.0, f64::max);
    let i = r.intersection.value;
    let checks = vec![Check::at_most("|i - 1/4|", (i - 0.25).abs(), 1e-3), Check::at_most("largest enclosing-cycle height", worst, 0.0)];
    Ok(Outcome {
        id: cfg.experiment.clone(),
        summary: json!({
            "i": i,
            "i_error": r.intersection.error,
            "jenkins_strebel_side": worst,
            "heights": r.heights.iter().map(|(l, _, h)| json!({ "class": l, "height": h.value })).collect::<Vec<_>>(),
            "achieved": { "i_gap": (i - 0.25).abs(), "max_height": worst },
        }),
        checks,
        csv: t.finish(),
        svg: Some(c.finish()),
    })
}
