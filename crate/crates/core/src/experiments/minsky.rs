use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{num, Check, ExperimentConfig, Outcome, Table};
use crate::domain::PlanarDomain;
use crate::error::Result;
use crate::lamination::{minsky_verify, LeafSource, MinskyReport, SampleConfig};
use crate::qd::QuadDiff;
use crate::svg::Canvas;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinskyCase {
    pub domain: PlanarDomain,
    pub phi: String,
    pub psi: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinskyRow {
    pub case: MinskyCase,
    pub report: MinskyReport,
    /// `A |Im(√c₁ conj √c₂)|` when both differentials are constant.
    pub oracle: Option<f64>,
}

fn constant(c: Complex64) -> String {
    format!("(mul (const {:?} {:?}) (dz2))", c.re, c.im)
}

/// `a (z − z0) dz²`.
fn linear(a: Complex64, z0: Complex64) -> String {
    format!("(mul (mul (const {:?} {:?}) (sub (z) (const {:?} {:?}))) (dz2))", a.re, a.im, z0.re, z0.im)
}

fn random_domain(rng: &mut ChaCha8Rng) -> Result<PlanarDomain> {
    let (x0, y0) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let (w, h) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
    if rng.gen_bool(0.5) {
        return PlanarDomain::rectangle(x0, x0 + w, y0, y0 + h);
    }
    let (w2, h1) = (w * rng.gen_range(0.3..0.7), h * rng.gen_range(0.3..0.7));
    PlanarDomain::rectilinear(
        vec![[x0, y0], [x0 + w, y0], [x0 + w, y0 + h1], [x0 + w2, y0 + h1], [x0 + w2, y0 + h], [x0, y0 + h]],
        vec![],
    )
}

fn random_coefficient(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(rng.gen_range(0.5..2.0), rng.gen_range(0.0..std::f64::consts::TAU))
}

/// A zero either well inside the domain or well outside it.
fn random_zero(rng: &mut ChaCha8Rng, d: &PlanarDomain) -> Complex64 {
    let bb = d.bbox();
    loop {
        let z = Complex64::new(rng.gen_range(bb.x0 - 1.0..bb.x1 + 1.0), rng.gen_range(bb.y0 - 1.0..bb.y1 + 1.0));
        if d.distance_to_boundary(z) > 0.1 {
            return z;
        }
    }
}

/// The equality case `(dz², −dz²)` on the unit square followed by `count`
/// seeded pairs cycling through constant/linear combinations.
pub fn minsky_catalog(seed: u64, count: usize) -> Result<Vec<MinskyCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![MinskyCase { domain: PlanarDomain::unit_square(), phi: "(dz2)".into(), psi: "(mul (const -1 0) (dz2))".into() }];
    for k in 0..count {
        let domain = random_domain(&mut rng)?;
        let mut pick = |lin: bool| {
            let a = random_coefficient(&mut rng);
            if lin {
                let z0 = random_zero(&mut rng, &domain);
                linear(a, z0)
            } else {
                constant(a)
            }
        };
        let (phi, psi) = (pick(k % 4 >= 2), pick(k % 2 == 1));
        out.push(MinskyCase { domain, phi, psi });
    }
    Ok(out)
}

pub fn minsky_suite(cases: &[MinskyCase], cfg: &SampleConfig, tol: f64) -> Result<Vec<MinskyRow>> {
    cases
        .iter()
        .map(|c| {
            let (p, q) = (QuadDiff::parse(&c.phi, c.domain.clone())?, QuadDiff::parse(&c.psi, c.domain.clone())?);
            let oracle = match (p.constant_value(), q.constant_value()) {
                (Some(a), Some(b)) => Some(c.domain.area() * (a.sqrt() * b.sqrt().conj()).im.abs()),
                _ => None,
            };
            let report = minsky_verify(&LeafSource::Differential(p), &LeafSource::Differential(q), cfg, tol)?;
            Ok(MinskyRow { case: c.clone(), report, oracle })
        })
        .collect()
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tol.unwrap_or(1e-8);
    let sc = SampleConfig { samples: cfg.samples.unwrap_or(400), budget: cfg.budget.unwrap_or(50.0), ..Default::default() };
    let cases = minsky_catalog(cfg.seed, cfg.count.unwrap_or(24))?;
    let rows = minsky_suite(&cases, &sc, tol)?;
    let mut t = Table::new(&["pair", "vertices", "phi", "psi", "i", "i_error", "norm_phi", "norm_psi", "bound", "combined_error", "slack", "holds", "oracle"]);
    for (k, r) in rows.iter().enumerate() {
        let v: Vec<String> = r.case.domain.vertices().iter().map(|p| format!("{:?} {:?}", p[0], p[1])).collect();
        let p = &r.report;
        t.row(&[
            k.to_string(),
            v.join(";"),
            r.case.phi.clone(),
            r.case.psi.clone(),
            num(p.i),
            num(p.i_error),
            num(p.norm_phi),
            num(p.norm_psi),
            num(p.bound),
            num(p.combined_error),
            num(p.slack),
            p.holds.to_string(),
            r.oracle.map_or(String::new(), num),
        ]);
    }

    // ratio i / sqrt(‖φ‖‖ψ‖) per pair
    let mut c = Canvas::new(crate::quadrature::Rect::new(0.0, rows.len() as f64, 0.0, 1.0), 480.0);
    for (k, r) in rows.iter().enumerate() {
        c.dot(Complex64::new(k as f64 + 0.5, r.report.i / r.report.bound.sqrt()), 3.0, if r.report.holds { "#4477aa" } else { "#cc3311" });
    }
    c.polyline(&[Complex64::new(0.0, 1.0), Complex64::new(rows.len() as f64, 1.0)], "black", 0.8);

    let eq = &rows[0].report;
    let failures = rows.iter().filter(|r| !r.report.holds).count();
    let oracle_gap = rows.iter().filter_map(|r| r.oracle.map(|o| (r.report.i - o).abs())).fold(0.0, f64::max);
    let checks = vec![
        Check::at_most("pairs violating i^2 <= |phi||psi| + error", failures as f64, 0.0),
        Check::at_most("equality case |i - 1|", (eq.i - 1.0).abs(), 1e-3),
        Check::at_most("equality case |i^2 - |phi||psi||", (eq.i * eq.i - eq.bound).abs(), 2e-3),
        Check::at_most("constant pairs |i - A |Im(sqrt(c1) conj sqrt(c2))||", oracle_gap, 1e-3),
    ];
    let summary = json!({
        "rows": rows,
        "achieved": {
            "equality_gap": (eq.i - 1.0).abs(),
            "constant_oracle_gap": oracle_gap,
            "worst_slack": rows.iter().map(|r| r.report.slack).fold(f64::INFINITY, f64::min),
            "max_i_error": rows.iter().map(|r| r.report.i_error).fold(0.0, f64::max),
        },
    });
    Ok(Outcome { id: cfg.experiment.clone(), summary, checks, csv: t.finish(), svg: Some(c.finish()) })
}
