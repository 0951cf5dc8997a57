//! Partial measured foliations given by charts `(U_i, v_i, E_i)`.
//!
//! Each chart is an axis-parallel rectangle `U_i`, optionally warped by a
//! diffeomorphism `h` (the chart is then `h(U_i)` with function
//! `v_i ∘ h⁻¹`). Leaves are level sets of `v_i` inside the support `E_i`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::qd::{eval_expr, QuadDiff};
use crate::grid_graph::{FlowNetwork, Graph};
use crate::quadrature::{adaptive_1d, adaptive_2d, gauss_legendre, gl16_interval, Quad2dOptions, Rect};

/// Pair of opposite chart sides joined by the leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sides {
    LeftRight,
    BottomTop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LevelFunction {
    /// `v = a x + b y + c`.
    Affine { a: f64, b: f64, c: f64 },
    /// `v = offset + Im ∫_base^z √φ dz` along the segment, with the root at
    /// `base` equal to `sign` times the principal one.
    Natural { expr: Expr, base: [f64; 2], sign: f64, offset: f64 },
}

/// Boundary-fixing diffeomorphisms of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Diffeo {
    Identity,
    /// `(x, y) ↦ (x, y + a sin(πx) sin(πy)/π)`, `|a| < 1`.
    YShear { a: f64 },
    /// `(x, y) ↦ (x + a sin(πx) sin(πy)/π, y)`, `|a| < 1`.
    XShear { a: f64 },
    /// `w ↦ c + (w − c)(1 + a (1 − |w−c|²/R²)²)` inside the disk of radius
    /// `R`, identity outside; injective for `−1 < a < 1.25`.
    RadialSqueeze { center: [f64; 2], radius: f64, a: f64 },
}

type Mat2 = [[f64; 2]; 2];

impl Diffeo {
    pub fn forward(&self, w: Complex64) -> Complex64 {
        match *self {
            Diffeo::Identity => w,
            Diffeo::YShear { a } => w + Complex64::new(0.0, a * (PI * w.re).sin() * (PI * w.im).sin() / PI),
            Diffeo::XShear { a } => w + Complex64::new(a * (PI * w.re).sin() * (PI * w.im).sin() / PI, 0.0),
            Diffeo::RadialSqueeze { center, radius, a } => {
                let c = Complex64::new(center[0], center[1]);
                let t2 = (w - c).norm_sqr() / (radius * radius);
                if t2 >= 1.0 {
                    return w;
                }
                c + (w - c) * (1.0 + a * (1.0 - t2).powi(2))
            }
        }
    }

    /// `∂(x', y')/∂(x, y)` at `w`.
    pub fn jacobian(&self, w: Complex64) -> Mat2 {
        match *self {
            Diffeo::Identity => [[1.0, 0.0], [0.0, 1.0]],
            Diffeo::YShear { a } => {
                let (sx, cx) = (PI * w.re).sin_cos();
                let (sy, cy) = (PI * w.im).sin_cos();
                [[1.0, 0.0], [a * cx * sy, 1.0 + a * sx * cy]]
            }
            Diffeo::XShear { a } => {
                let (sx, cx) = (PI * w.re).sin_cos();
                let (sy, cy) = (PI * w.im).sin_cos();
                [[1.0 + a * cx * sy, a * sx * cy], [0.0, 1.0]]
            }
            Diffeo::RadialSqueeze { center, radius, a } => {
                let c = Complex64::new(center[0], center[1]);
                let d = w - c;
                let r2 = radius * radius;
                let t2 = d.norm_sqr() / r2;
                if t2 >= 1.0 {
                    return [[1.0, 0.0], [0.0, 1.0]];
                }
                let m = 1.0 + a * (1.0 - t2).powi(2);
                // ∇m = −4a(1 − t²) d / R²
                let k = -4.0 * a * (1.0 - t2) / r2;
                [[m + k * d.re * d.re, k * d.re * d.im], [k * d.im * d.re, m + k * d.im * d.im]]
            }
        }
    }

    pub fn inverse(&self, z: Complex64) -> Result<Complex64> {
        if let Diffeo::Identity = self {
            return Ok(z);
        }
        let mut w = z;
        for _ in 0..60 {
            let r = self.forward(w) - z;
            if r.norm() < 1e-15 {
                return Ok(w);
            }
            let j = self.jacobian(w);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let dx = (j[1][1] * r.re - j[0][1] * r.im) / det;
            let dy = (-j[1][0] * r.re + j[0][0] * r.im) / det;
            w -= Complex64::new(dx, dy);
        }
        if (self.forward(w) - z).norm() < 1e-12 {
            Ok(w)
        } else {
            Err(Error::BranchContinuationFailure(format!("diffeomorphism inverse at {z} did not converge")))
        }
    }
}

/// Seeded catalog of boundary-fixing competitors on the unit square.
pub fn competitor_catalog(seed: u64, count: usize) -> Vec<Diffeo> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| match k % 3 {
            0 => Diffeo::YShear { a: rng.gen_range(-0.9..0.9) },
            1 => Diffeo::XShear { a: rng.gen_range(-0.9..0.9) },
            _ => {
                let cx = rng.gen_range(0.3..0.7);
                let cy = rng.gen_range(0.3..0.7);
                let room = [cx, 1.0 - cx, cy, 1.0 - cy].into_iter().fold(f64::INFINITY, f64::min);
                Diffeo::RadialSqueeze { center: [cx, cy], radius: rng.gen_range(0.5..1.0) * room, a: rng.gen_range(-0.6..0.6) }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub rect: Rect,
    pub sides: Sides,
    pub v: LevelFunction,
    /// Support `E_i`; all of the chart when absent.
    pub support: Option<Rect>,
    #[serde(default = "identity")]
    pub warp: Diffeo,
}

fn identity() -> Diffeo {
    Diffeo::Identity
}

fn principal_sqrt(z: Complex64) -> Complex64 {
    z.sqrt()
}

impl Chart {
    pub fn affine(rect: Rect, a: f64, b: f64, c: f64) -> Chart {
        let sides = if b.abs() >= a.abs() { Sides::LeftRight } else { Sides::BottomTop };
        Chart { rect, sides, v: LevelFunction::Affine { a, b, c }, support: None, warp: Diffeo::Identity }
    }

    fn local(&self, z: Complex64) -> Result<Complex64> {
        self.warp.inverse(z)
    }

    fn in_rect(r: &Rect, w: Complex64) -> bool {
        let e = 1e-12;
        w.re >= r.x0 - e && w.re <= r.x1 + e && w.im >= r.y0 - e && w.im <= r.y1 + e
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.local(z).is_ok_and(|w| Chart::in_rect(&self.rect, w))
    }

    /// Inside the chart and its support.
    pub fn supports(&self, z: Complex64) -> bool {
        self.local(z).is_ok_and(|w| Chart::in_rect(&self.rect, w) && self.support.is_none_or(|e| Chart::in_rect(&e, w)))
    }

    /// `(v, ∇v)` in local coordinates, the gradient as `v_x + i v_y`.
    fn local_value(&self, w: Complex64) -> Result<(f64, Complex64)> {
        match &self.v {
            LevelFunction::Affine { a, b, c } => Ok((a * w.re + b * w.im + c, Complex64::new(*a, *b))),
            LevelFunction::Natural { expr, base, sign, offset } => {
                let b = Complex64::new(base[0], base[1]);
                let (f, root) = natural_integral(expr, b, w, *sign)?;
                Ok((offset + f.im, Complex64::new(root.im, root.re)))
            }
        }
    }

    /// Local gradient only; for natural charts no branch tracking is needed
    /// because callers use it up to sign.
    fn local_gradient(&self, w: Complex64) -> Result<Complex64> {
        match &self.v {
            LevelFunction::Affine { a, b, .. } => Ok(Complex64::new(*a, *b)),
            LevelFunction::Natural { expr, .. } => {
                let root = principal_sqrt(eval_expr(expr, w)?);
                Ok(Complex64::new(root.im, root.re))
            }
        }
    }

    fn pull_gradient(&self, w: Complex64, g: Complex64) -> Complex64 {
        // ∇(v∘h⁻¹) = (Dh)^{-T} ∇v
        let j = self.warp.jacobian(w);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let gx = (j[1][1] * g.re - j[1][0] * g.im) / det;
        let gy = (-j[0][1] * g.re + j[0][0] * g.im) / det;
        Complex64::new(gx, gy)
    }

    pub fn value(&self, z: Complex64) -> Result<f64> {
        Ok(self.local_value(self.local(z)?)?.0)
    }

    /// `∇v` at `z` as `v_x + i v_y`, up to sign for natural charts.
    pub fn gradient(&self, z: Complex64) -> Result<Complex64> {
        let w = self.local(z)?;
        Ok(self.pull_gradient(w, self.local_gradient(w)?))
    }
}

/// `∫_a^b √φ dz` along the segment with the root continued from
/// `sign·√φ(a)`, and the continued root at `b`.
fn natural_integral(expr: &Expr, a: Complex64, b: Complex64, sign: f64) -> Result<(Complex64, Complex64)> {
    const PIECES: usize = 8;
    let (nodes, weights) = gauss_legendre(16);
    let d = b - a;
    let mut prev = principal_sqrt(eval_expr(expr, a)?) * sign;
    let floor = 1e-14;
    if prev.norm() < floor {
        return Err(Error::BranchContinuationFailure(format!("zero of the differential at {a}")));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    let follow = |t: f64, prev: &mut Complex64| -> Result<Complex64> {
        let mut s = principal_sqrt(eval_expr(expr, a + d * t)?);
        if s.norm() < floor {
            return Err(Error::BranchContinuationFailure(format!("zero of the differential at {}", a + d * t)));
        }
        if (s - *prev).norm() > (s + *prev).norm() {
            s = -s;
        }
        *prev = s;
        Ok(s)
    };
    for p in 0..PIECES {
        let (t0, t1) = (p as f64 / PIECES as f64, (p + 1) as f64 / PIECES as f64);
        for (x, w) in nodes.iter().zip(&weights) {
            let t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * x;
            let s = follow(t, &mut prev)?;
            acc += s * (w * 0.5 * (t1 - t0));
        }
    }
    let end = follow(1.0, &mut prev)?;
    Ok((acc * d, end))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialFoliation {
    pub domain: PlanarDomain,
    pub charts: Vec<Chart>,
}

/// A polyline arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransverseArc {
    pub points: Vec<[f64; 2]>,
}

impl TransverseArc {
    pub fn segment(a: Complex64, b: Complex64) -> Self {
        TransverseArc { points: vec![[a.re, a.im], [b.re, b.im]] }
    }

    pub fn from_points(points: &[Complex64]) -> Self {
        TransverseArc { points: points.iter().map(|z| [z.re, z.im]).collect() }
    }

    pub fn vertices(&self) -> Vec<Complex64> {
        self.points.iter().map(|p| Complex64::new(p[0], p[1])).collect()
    }
}

impl PartialFoliation {
    pub fn new(domain: PlanarDomain, charts: Vec<Chart>) -> Result<Self> {
        if charts.is_empty() {
            return Err(Error::InvalidDomain("a foliation needs at least one chart".into()));
        }
        Ok(PartialFoliation { domain, charts })
    }

    /// Single affine chart `v = y` over the whole rectangle-shaped domain.
    pub fn horizontal(domain: PlanarDomain) -> Self {
        let bb = domain.bbox();
        PartialFoliation { domain, charts: vec![Chart::affine(bb, 0.0, 1.0, 0.0)] }
    }

    /// Foliation by the horizontal trajectories of `qd`: each domain tile
    /// is cut into `resolution²` charts with natural parameters. Charts
    /// that contain a zero of `qd` are subdivided, and dropped once they are
    /// small.
    pub fn from_quad_diff(qd: &QuadDiff, resolution: usize) -> Result<Self> {
        if qd.domain.is_disk() {
            return Err(Error::InvalidDomain("charts are built on rectilinear domains".into()));
        }
        let res = resolution.max(1);
        let mut jitter = 0.0;
        for _attempt in 0..4 {
            match build_charts(qd, res, jitter) {
                Err(Error::ZeroOnChartBoundary(_)) => jitter += 0.137 / res as f64,
                other => return other.map(|charts| PartialFoliation { domain: qd.domain.clone(), charts }),
            }
        }
        Err(Error::ZeroOnChartBoundary("jittered covers kept meeting zeros".into()))
    }

    /// Pushforward under a diffeomorphism of the domain.
    pub fn pushforward(&self, h: Diffeo) -> Result<Self> {
        if self.charts.iter().any(|c| c.warp != Diffeo::Identity) {
            return Err(Error::InvalidDomain("nested pushforwards are not supported".into()));
        }
        let charts = self.charts.iter().map(|c| Chart { warp: h, ..c.clone() }).collect();
        Ok(PartialFoliation { domain: self.domain.clone(), charts })
    }

    fn support_count(&self, z: Complex64) -> usize {
        self.charts.iter().filter(|c| c.supports(z)).count()
    }

    /// `Σ ρ_i |∇v_i|²` with `ρ_i = 1/#{charts supporting z}`.
    fn energy_density(&self, z: Complex64) -> Result<f64> {
        let n = self.support_count(z);
        if n == 0 {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for c in &self.charts {
            if c.supports(z) {
                acc += c.gradient(z)?.norm_sqr();
            }
        }
        Ok(acc / n as f64)
    }

    fn split_cells(&self) -> Vec<Rect> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let warped = self.charts.iter().any(|c| c.warp != Diffeo::Identity);
        if !warped {
            for c in &self.charts {
                for r in std::iter::once(c.rect).chain(c.support) {
                    xs.extend([r.x0, r.x1]);
                    ys.extend([r.y0, r.y1]);
                }
            }
        }
        let mut cells = Vec::new();
        for t in self.domain.rectangles() {
            let mut cx: Vec<f64> = xs.iter().copied().filter(|x| *x > t.x0 && *x < t.x1).chain([t.x0, t.x1]).collect();
            let mut cy: Vec<f64> = ys.iter().copied().filter(|y| *y > t.y0 && *y < t.y1).chain([t.y0, t.y1]).collect();
            cx.sort_by(f64::total_cmp);
            cy.sort_by(f64::total_cmp);
            cx.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
            cy.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
            for i in 0..cx.len() - 1 {
                for j in 0..cy.len() - 1 {
                    cells.push(Rect::new(cx[i], cx[i + 1], cy[j], cy[j + 1]));
                }
            }
        }
        cells
    }

    /// `D(F) = ∫ Σ ρ_i |∇v_i|²` over the supports.
    pub fn dirichlet_integral(&self, tol: f64) -> Result<f64> {
        let err = std::cell::RefCell::new(None);
        let f = |x: f64, y: f64| match self.energy_density(Complex64::new(x, y)) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        };
        let r = adaptive_2d(&f, &self.split_cells(), Quad2dOptions { tol, max_cells: 400_000, min_cell: 1e-9 });
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        if !r.converged {
            return Err(Error::QuadratureNotConverged { estimate: r.error, tol });
        }
        Ok(r.value)
    }

    /// Total variation of the chart functions along the arc.
    pub fn transverse_measure(&self, arc: &TransverseArc, tol: f64) -> Result<f64> {
        let pts = arc.vertices();
        for w in pts.windows(2) {
            let inside = (0..=64).all(|k| self.domain.contains_closed(w[0] + (w[1] - w[0]) * (k as f64 / 64.0), 1e-12));
            if !inside {
                return Err(Error::ArcExitsDomain(format!("segment {} → {}", w[0], w[1])));
            }
        }
        let mut total = 0.0;
        for w in pts.windows(2) {
            total += self.segment_measure(w[0], w[1], tol)?;
        }
        Ok(total)
    }

    fn breakpoints(&self, a: Complex64, b: Complex64) -> Vec<f64> {
        let mut ts = vec![0.0, 1.0];
        let d = b - a;
        let warped = self.charts.iter().any(|c| c.warp != Diffeo::Identity);
        if warped {
            ts.extend((1..64).map(|k| k as f64 / 64.0));
        } else {
            for c in &self.charts {
                for r in std::iter::once(c.rect).chain(c.support) {
                    for x in [r.x0, r.x1] {
                        if d.re != 0.0 {
                            ts.push((x - a.re) / d.re);
                        }
                    }
                    for y in [r.y0, r.y1] {
                        if d.im != 0.0 {
                            ts.push((y - a.im) / d.im);
                        }
                    }
                }
            }
        }
        ts.retain(|t| (0.0..=1.0).contains(t));
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
        ts
    }

    fn segment_measure(&self, a: Complex64, b: Complex64, tol: f64) -> Result<f64> {
        let d = b - a;
        if d.norm() == 0.0 {
            return Ok(0.0);
        }
        let ts = self.breakpoints(a, b);
        let mut total = 0.0;
        for w in ts.windows(2) {
            let mid = a + d * (0.5 * (w[0] + w[1]));
            let Some(chart) = self.charts.iter().find(|c| c.supports(mid)) else { continue };
            let err = std::cell::RefCell::new(None);
            let f = |t: f64| {
                let z = a + d * t;
                match chart.gradient(z) {
                    Ok(g) => (g.re * d.re + g.im * d.im).abs(),
                    Err(e) => {
                        err.borrow_mut().get_or_insert(e);
                        0.0
                    }
                }
            };
            let (v, _) = adaptive_1d(&f, w[0], w[1], tol, 2000);
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
            total += v;
        }
        Ok(total)
    }

    /// Largest deviation from `v_i = ±v_j + const` over sampled overlaps.
    pub fn overlap_defect(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..self.charts.len() {
            for j in i + 1..self.charts.len() {
                let (a, b) = (&self.charts[i].rect, &self.charts[j].rect);
                let (x0, x1, y0, y1) = (a.x0.max(b.x0), a.x1.min(b.x1), a.y0.max(b.y0), a.y1.min(b.y1));
                if x0 > x1 + 1e-12 || y0 > y1 + 1e-12 {
                    continue;
                }
                let mut diffs = [Vec::new(), Vec::new()];
                for p in 0..=4 {
                    for q in 0..=4 {
                        let z = Complex64::new(x0 + (x1 - x0) * p as f64 / 4.0, y0 + (y1 - y0) * q as f64 / 4.0);
                        if !self.domain.contains_closed(z, 1e-12) {
                            continue;
                        }
                        let (vi, vj) = (self.charts[i].value(z)?, self.charts[j].value(z)?);
                        diffs[0].push(vi - vj);
                        diffs[1].push(vi + vj);
                    }
                }
                let spread = |v: &Vec<f64>| {
                    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if v.is_empty() { 0.0 } else { hi - lo }
                };
                worst = worst.max(spread(&diffs[0]).min(spread(&diffs[1])));
            }
        }
        Ok(worst)
    }
}

/// Homotopy class whose height is measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ClassSpec {
    /// Arcs joining two named boundary arcs.
    Crosscut { from: String, to: String },
    /// Closed curves enclosing exactly the listed punctures.
    Cycle { punctures: Vec<usize> },
}

impl ClassSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::ClassSpecInvalid(e.to_string()))
    }
}

/// Height of a class together with a minimizing representative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Height {
    pub value: f64,
    pub representative: Vec<[f64; 2]>,
    pub grid_n: usize,
}

struct Lattice {
    x0: f64,
    y0: f64,
    h: f64,
    nx: usize,
    ny: usize,
}

impl Lattice {
    fn new(domain: &PlanarDomain, grid_n: usize) -> Self {
        let bb = domain.bbox();
        let h = (bb.x1 - bb.x0).min(bb.y1 - bb.y0) / grid_n as f64;
        let nx = ((bb.x1 - bb.x0) / h).round() as usize;
        let ny = ((bb.y1 - bb.y0) / h).round() as usize;
        Lattice { x0: bb.x0, y0: bb.y0, h, nx, ny }
    }

    fn point(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h)
    }

    fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

impl PartialFoliation {
    /// Transverse measure of a lattice edge by a fixed 16-point rule on
    /// each chart piece.
    fn edge_measure(&self, a: Complex64, b: Complex64) -> Result<f64> {
        let d = b - a;
        let ts = self.breakpoints(a, b);
        let mut total = 0.0;
        for w in ts.windows(2) {
            let mid = a + d * (0.5 * (w[0] + w[1]));
            let Some(chart) = self.charts.iter().find(|c| c.supports(mid)) else { continue };
            let err = std::cell::RefCell::new(None);
            let f = |t: f64| match chart.gradient(a + d * t) {
                Ok(g) => (g.re * d.re + g.im * d.im).abs(),
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    0.0
                }
            };
            total += gl16_interval(&f, w[0], w[1]);
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
        }
        Ok(total)
    }

    /// Minimum transverse measure over the class, on a lattice with
    /// `grid_n` steps across the shorter side of the bounding box.
    pub fn height(&self, class: &ClassSpec, grid_n: usize) -> Result<Height> {
        if self.domain.is_disk() {
            return Err(Error::ClassSpecInvalid("heights are computed on rectilinear domains".into()));
        }
        if grid_n < 2 {
            return Err(Error::GridTooCoarse(format!("grid_n = {grid_n}")));
        }
        let lat = Lattice::new(&self.domain, grid_n);
        match class {
            ClassSpec::Crosscut { from, to } => self.crosscut_height(&lat, from, to, grid_n),
            ClassSpec::Cycle { punctures } => self.cycle_height(&lat, punctures, grid_n),
        }
    }

    fn crosscut_height(&self, lat: &Lattice, from: &str, to: &str, grid_n: usize) -> Result<Height> {
        let arc = |name: &str| {
            self.domain.arc(name).cloned().ok_or_else(|| Error::ClassSpecInvalid(format!("no boundary arc named {name:?}")))
        };
        let (a_from, a_to) = (arc(from)?, arc(to)?);
        let scale = lat.h * 1e-9;
        let pts = self.domain.puncture_points();
        let near_puncture = |z: Complex64, r: f64| pts.iter().any(|p| (p - z).norm() <= r);
        let mut g = Graph::new((lat.nx + 1) * (lat.ny + 1));
        let mut alive = vec![false; g.len()];
        for j in 0..=lat.ny {
            for i in 0..=lat.nx {
                let z = lat.point(i, j);
                alive[lat.node(i, j)] = self.domain.contains_closed(z, scale) && !near_puncture(z, scale);
            }
        }
        let (mut src, mut dst) = (Vec::new(), Vec::new());
        for j in 0..=lat.ny {
            for i in 0..=lat.nx {
                let u = lat.node(i, j);
                if !alive[u] {
                    continue;
                }
                let z = lat.point(i, j);
                if self.domain.distance_to_boundary(z) <= scale {
                    let t = self.domain.boundary_coordinate(z);
                    if a_from.contains(t, 1e-12) {
                        src.push(u);
                    }
                    if a_to.contains(t, 1e-12) {
                        dst.push(u);
                    }
                }
                for (di, dj) in [(1, 0), (0, 1)] {
                    let (i2, j2) = (i + di, j + dj);
                    if i2 > lat.nx || j2 > lat.ny || !alive[lat.node(i2, j2)] {
                        continue;
                    }
                    let w = lat.point(i2, j2);
                    let mid = 0.5 * (z + w);
                    if !self.domain.contains_closed(mid, scale) {
                        continue;
                    }
                    if pts.iter().any(|p| crate::domain::point_segment_distance(*p, z, w) <= scale) {
                        continue;
                    }
                    g.add_edge(u, lat.node(i2, j2), self.edge_measure(z, w)?);
                }
            }
        }
        if src.is_empty() || dst.is_empty() {
            return Err(Error::GridTooCoarse(format!("no lattice node on {from:?} or {to:?}")));
        }
        let path = g.shortest_path(&src, &dst).ok_or_else(|| Error::GridTooCoarse("arcs are not joined in the lattice".into()))?;
        let representative = path
            .nodes
            .iter()
            .map(|&u| {
                let z = lat.point(u % (lat.nx + 1), u / (lat.nx + 1));
                [z.re, z.im]
            })
            .collect();
        Ok(Height { value: path.weight, representative, grid_n })
    }

    fn cycle_height(&self, lat: &Lattice, chosen: &[usize], grid_n: usize) -> Result<Height> {
        let pts = self.domain.puncture_points();
        if chosen.is_empty() {
            return Err(Error::ClassSpecInvalid("a cycle must enclose at least one puncture".into()));
        }
        if let Some(k) = chosen.iter().find(|&&k| k >= pts.len()) {
            return Err(Error::ClassSpecInvalid(format!("no puncture with index {k}")));
        }
        let ncell = lat.nx * lat.ny;
        let (outer, source, sink) = (ncell, ncell + 1, ncell + 2);
        let mut net = FlowNetwork::new(ncell + 3);
        let centre = |i: usize, j: usize| lat.point(i, j) + Complex64::new(0.5 * lat.h, 0.5 * lat.h);
        let inside: Vec<bool> = (0..ncell).map(|c| self.domain.contains_ignoring_punctures(centre(c % lat.nx, c / lat.nx))).collect();
        let mut role = vec![0u8; ncell];
        let tol = 1e-12 * lat.h;
        for (k, p) in pts.iter().enumerate() {
            let tag = if chosen.contains(&k) { 1 } else { 2 };
            let rel = (p - Complex64::new(lat.x0, lat.y0)) / lat.h;
            let (ia, ib) = ((rel.re - tol).floor().max(0.0) as usize, ((rel.re + tol).floor() as usize).min(lat.nx - 1));
            let (ja, jb) = ((rel.im - tol).floor().max(0.0) as usize, ((rel.im + tol).floor() as usize).min(lat.ny - 1));
            for j in ja..=jb {
                for i in ia..=ib {
                    let c = lat.cell(i, j);
                    if role[c] != 0 && role[c] != tag {
                        return Err(Error::GridTooCoarse(format!("puncture {k} shares a cell with another class")));
                    }
                    role[c] = tag;
                }
            }
        }
        for j in 0..lat.ny {
            for i in 0..lat.nx {
                let c = lat.cell(i, j);
                if !inside[c] {
                    continue;
                }
                match role[c] {
                    1 => net.add_undirected(source, c, f64::INFINITY),
                    2 => net.add_undirected(c, sink, f64::INFINITY),
                    _ => {}
                }
                // shared sides with the right and upper neighbours, and with
                // the outside on every side
                let sides = [
                    (i + 1 < lat.nx).then(|| lat.cell(i + 1, j)).filter(|&d| inside[d]),
                    (j + 1 < lat.ny).then(|| lat.cell(i, j + 1)).filter(|&d| inside[d]),
                    (i > 0).then(|| lat.cell(i - 1, j)).filter(|&d| inside[d]),
                    (j > 0).then(|| lat.cell(i, j - 1)).filter(|&d| inside[d]),
                ];
                let segs = [
                    (lat.point(i + 1, j), lat.point(i + 1, j + 1)),
                    (lat.point(i, j + 1), lat.point(i + 1, j + 1)),
                    (lat.point(i, j), lat.point(i, j + 1)),
                    (lat.point(i, j), lat.point(i + 1, j)),
                ];
                for (k, (nb, (a, b))) in sides.iter().zip(segs).enumerate() {
                    match nb {
                        Some(d) if k < 2 => net.add_undirected(c, *d, self.edge_measure(a, b)?),
                        Some(_) => {}
                        None => net.add_undirected(c, outer, self.edge_measure(a, b)?),
                    }
                }
            }
        }
        net.add_undirected(outer, sink, f64::INFINITY);
        let (value, side) = net.max_flow(source, sink);
        let representative = cut_boundary(lat, &side[..ncell], &inside);
        Ok(Height { value, representative, grid_n })
    }
}

/// Lattice edges separating source-side cells from the rest, as a flat
/// list of segment endpoints.
fn cut_boundary(lat: &Lattice, side: &[bool], inside: &[bool]) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    let on = |i: isize, j: isize| {
        i >= 0 && j >= 0 && (i as usize) < lat.nx && (j as usize) < lat.ny && {
            let c = lat.cell(i as usize, j as usize);
            inside[c] && side[c]
        }
    };
    for j in 0..lat.ny as isize {
        for i in 0..lat.nx as isize {
            if !on(i, j) {
                continue;
            }
            let (iu, ju) = (i as usize, j as usize);
            let edges = [
                (on(i + 1, j), lat.point(iu + 1, ju), lat.point(iu + 1, ju + 1)),
                (on(i, j + 1), lat.point(iu, ju + 1), lat.point(iu + 1, ju + 1)),
                (on(i - 1, j), lat.point(iu, ju), lat.point(iu, ju + 1)),
                (on(i, j - 1), lat.point(iu, ju), lat.point(iu + 1, ju)),
            ];
            for (same, a, b) in edges {
                if !same {
                    out.push([a.re, a.im]);
                    out.push([b.re, b.im]);
                }
            }
        }
    }
    out
}

fn zeros_inside(expr: &Expr, r: &Rect) -> Result<i64> {
    let f = |z: Complex64| eval_expr(expr, z);
    crate::trajectory::winding_number(&f, r, 1e-10 * (1.0 + r.diameter()))
}

fn natural_chart(expr: &Expr, rect: Rect) -> Result<Chart> {
    let base = Complex64::new(0.5 * (rect.x0 + rect.x1), 0.5 * (rect.y0 + rect.y1));
    let root = principal_sqrt(eval_expr(expr, base)?);
    // Leaves are horizontal where Im(√φ dz) = 0; they join the left and
    // right sides when √φ is closer to real than to imaginary.
    let sides = if root.re.abs() >= root.im.abs() { Sides::LeftRight } else { Sides::BottomTop };
    Ok(Chart {
        rect,
        sides,
        v: LevelFunction::Natural { expr: expr.clone(), base: [base.re, base.im], sign: 1.0, offset: 0.0 },
        support: None,
        warp: Diffeo::Identity,
    })
}

fn build_charts(qd: &QuadDiff, res: usize, jitter: f64) -> Result<Vec<Chart>> {
    let expr = &qd.expr;
    let mut out = Vec::new();
    for t in qd.domain.rectangles() {
        let (w, h) = ((t.x1 - t.x0) / res as f64, (t.y1 - t.y0) / res as f64);
        let cut = |k: usize, lo: f64, step: f64, hi: f64| {
            if k == 0 {
                lo
            } else if k == res {
                hi
            } else {
                lo + step * (k as f64 + jitter * res as f64)
            }
        };
        let mut stack = Vec::new();
        for i in 0..res {
            for j in 0..res {
                let r = Rect::new(cut(i, t.x0, w, t.x1), cut(i + 1, t.x0, w, t.x1), cut(j, t.y0, h, t.y1), cut(j + 1, t.y0, h, t.y1));
                stack.push((r, 0));
            }
        }
        while let Some((r, depth)) = stack.pop() {
            if (expr.depends_on_z() || !expr.map_names().is_empty())
                && zeros_inside(expr, &r)? != 0 {
                    if depth < 6 {
                        let (xm, ym) = (0.5 * (r.x0 + r.x1), 0.5 * (r.y0 + r.y1));
                        for c in [
                            Rect::new(r.x0, xm, r.y0, ym),
                            Rect::new(xm, r.x1, r.y0, ym),
                            Rect::new(r.x0, xm, ym, r.y1),
                            Rect::new(xm, r.x1, ym, r.y1),
                        ] {
                            stack.push((c, depth + 1));
                        }
                    }
                    continue;
                }
            out.push(natural_chart(expr, r)?);
        }
    }
    out.sort_by(|a, b| (a.rect.y0, a.rect.x0).partial_cmp(&(b.rect.y0, b.rect.x0)).expect("finite"));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64, y: f64) -> Complex64 {
        Complex64::new(x, y)
    }

    #[test]
    fn constant_differentials_give_single_affine_like_charts() {
        let sq = PlanarDomain::unit_square();
        let f = PartialFoliation::from_quad_diff(&QuadDiff::parse("(dz2)", sq.clone()).unwrap(), 1).unwrap();
        assert_eq!(f.charts.len(), 1);
        let ch = &f.charts[0];
        assert_eq!(ch.sides, Sides::LeftRight);
        let dv = ch.value(c(0.3, 0.9)).unwrap() - ch.value(c(0.7, 0.2)).unwrap();
        assert!((dv - 0.7).abs() < 1e-13);
        let g = PartialFoliation::from_quad_diff(&QuadDiff::parse("(mul (const -1 0) (dz2))", sq).unwrap(), 1).unwrap();
        let ch = &g.charts[0];
        assert_eq!(ch.sides, Sides::BottomTop);
        let dv = ch.value(c(0.3, 0.9)).unwrap() - ch.value(c(0.7, 0.9)).unwrap();
        assert!((dv.abs() - 0.4).abs() < 1e-13);
    }

    #[test]
    fn natural_parameter_of_z_matches_closed_form() {
        let d = PlanarDomain::rectangle(0.25, 1.0, 0.25, 1.0).unwrap();
        let qd = QuadDiff::parse("(mul (z) (dz2))", d).unwrap();
        let f = PartialFoliation::from_quad_diff(&qd, 3).unwrap();
        assert_eq!(f.charts.len(), 9);
        let anti = |z: Complex64| (z.powf(1.5) * (2.0 / 3.0)).im;
        for ch in &f.charts {
            let b = Complex64::new(0.5 * (ch.rect.x0 + ch.rect.x1), 0.5 * (ch.rect.y0 + ch.rect.y1));
            let z = Complex64::new(ch.rect.x0, ch.rect.y1);
            let got = ch.value(z).unwrap() - ch.value(b).unwrap();
            assert!((got - (anti(z) - anti(b))).abs() < 1e-12);
        }
        assert!(f.overlap_defect().unwrap() < 1e-12);
    }

    #[test]
    fn dirichlet_integral_examples() {
        let sq = PlanarDomain::unit_square();
        let f = PartialFoliation::horizontal(sq.clone());
        assert!((f.dirichlet_integral(1e-10).unwrap() - 1.0).abs() < 1e-12);
        let f2 = PartialFoliation::new(sq.clone(), vec![Chart::affine(sq.bbox(), 0.0, 2.0, 0.0)]).unwrap();
        assert!((f2.dirichlet_integral(1e-10).unwrap() - 4.0).abs() < 1e-12);
        let x = PlanarDomain::rectangle(-0.5, 0.5, -0.5, 0.5).unwrap();
        let strip = PartialFoliation::new(x, vec![Chart::affine(Rect::new(-0.5, 0.5, 0.25, 0.5), 0.0, 1.0, 0.0)]).unwrap();
        assert!((strip.dirichlet_integral(1e-10).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_integral_matches_l1_norm() {
        let d = PlanarDomain::rectangle(0.25, 1.0, 0.25, 1.0).unwrap();
        let qd = QuadDiff::parse("(mul (z) (dz2))", d).unwrap();
        let f = PartialFoliation::from_quad_diff(&qd, 2).unwrap();
        let a = f.dirichlet_integral(1e-9).unwrap();
        let b = qd.l1_norm(1e-9).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} {b}");
    }

    #[test]
    fn transverse_measure_examples() {
        let f = PartialFoliation::horizontal(PlanarDomain::unit_square());
        let up = TransverseArc::segment(c(0.5, 0.0), c(0.5, 1.0));
        assert!((f.transverse_measure(&up, 1e-12).unwrap() - 1.0).abs() < 1e-12);
        let along = TransverseArc::segment(c(0.0, 0.5), c(1.0, 0.5));
        assert_eq!(f.transverse_measure(&along, 1e-12).unwrap(), 0.0);
        let zig = TransverseArc::from_points(&[c(0.1, 0.1), c(0.2, 0.8), c(0.3, 0.4)]);
        assert!((f.transverse_measure(&zig, 1e-12).unwrap() - 1.1).abs() < 1e-12);
        let out = TransverseArc::segment(c(0.5, 0.5), c(1.5, 0.5));
        assert!(matches!(f.transverse_measure(&out, 1e-12), Err(Error::ArcExitsDomain(_))));
        let x = PlanarDomain::rectangle(-0.5, 0.5, -0.5, 0.5).unwrap();
        let strip = PartialFoliation::new(x, vec![Chart::affine(Rect::new(-0.5, 0.5, 0.25, 0.5), 0.0, 1.0, 0.0)]).unwrap();
        let s = TransverseArc::segment(c(0.0, 0.0), c(0.0, 0.5));
        assert!((strip.transverse_measure(&s, 1e-12).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn diffeos_invert_and_fix_the_boundary() {
        for h in competitor_catalog(3, 9) {
            for k in 0..=8 {
                let t = k as f64 / 8.0;
                for z in [c(t, 0.0), c(t, 1.0), c(0.0, t), c(1.0, t)] {
                    assert!((h.forward(z) - z).norm() < 1e-15, "{h:?}");
                }
                let w = c(0.1 + 0.1 * k as f64, 0.55);
                assert!((h.forward(h.inverse(w).unwrap()) - w).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn competitors_do_not_beat_the_harmonic_foliation() {
        let f = PartialFoliation::horizontal(PlanarDomain::unit_square());
        for h in competitor_catalog(11, 3) {
            let d = f.pushforward(h).unwrap().dirichlet_integral(1e-9).unwrap();
            assert!(d >= 1.0 - 1e-8, "{h:?} {d}");
        }
        let id = f.pushforward(Diffeo::Identity).unwrap().dirichlet_integral(1e-9).unwrap();
        assert!((id - 1.0).abs() < 1e-12);
    }

    fn strip_on_punctured_square() -> PartialFoliation {
        let pts: Vec<[f64; 2]> = (3..=8).flat_map(|n| {
            let a = 0.5 - 1.0 / n as f64;
            [[a, 0.0], [-a, 0.0]]
        }).collect();
        let x = PlanarDomain::rectangle(-0.5, 0.5, -0.5, 0.5).unwrap().with_punctures(pts).unwrap();
        PartialFoliation::new(x, vec![Chart::affine(Rect::new(-0.5, 0.5, 0.25, 0.5), 0.0, 1.0, 0.0)]).unwrap()
    }

    #[test]
    fn crosscut_heights() {
        let f = PartialFoliation::horizontal(PlanarDomain::unit_square());
        let up = ClassSpec::from_json(r#"{"type":"crosscut","from":"bottom","to":"top"}"#).unwrap();
        assert!((f.height(&up, 8).unwrap().value - 1.0).abs() < 1e-12);
        let across = ClassSpec::Crosscut { from: "left".into(), to: "right".into() };
        assert_eq!(f.height(&across, 8).unwrap().value, 0.0);
        let bad = ClassSpec::Crosscut { from: "left".into(), to: "nowhere".into() };
        assert!(matches!(f.height(&bad, 8), Err(Error::ClassSpecInvalid(_))));
    }

    #[test]
    fn cycles_around_punctures_avoid_the_strip() {
        let f = strip_on_punctured_square();
        for k in 0..12 {
            let h = f.height(&ClassSpec::Cycle { punctures: vec![k] }, 128).unwrap();
            assert_eq!(h.value, 0.0, "puncture {k}");
            assert!(!h.representative.is_empty());
        }
        let all = ClassSpec::Cycle { punctures: (0..12).collect() };
        assert_eq!(f.height(&all, 128).unwrap().value, 0.0);
        assert!(matches!(f.height(&ClassSpec::Cycle { punctures: vec![12] }, 128), Err(Error::ClassSpecInvalid(_))));
        assert!(matches!(f.height(&ClassSpec::Cycle { punctures: vec![9] }, 8), Err(Error::GridTooCoarse(_))));
    }

    #[test]
    fn cycle_height_counts_forced_crossings() {
        // a puncture inside the strip: any enclosing loop crosses it twice
        let x = PlanarDomain::rectangle(0.0, 1.0, 0.0, 1.0).unwrap().with_punctures(vec![[0.5, 0.5]]).unwrap();
        let f = PartialFoliation::new(x, vec![Chart::affine(Rect::new(0.0, 1.0, 0.25, 0.75), 0.0, 1.0, 0.0)]).unwrap();
        let h = f.height(&ClassSpec::Cycle { punctures: vec![0] }, 16).unwrap();
        // the puncture sits on a node, so four cells enclose it
        assert!((h.value - 4.0 / 16.0).abs() < 1e-12, "{}", h.value);
        let h32 = f.height(&ClassSpec::Cycle { punctures: vec![0] }, 32).unwrap();
        assert!(h32.value <= h.value + 1e-12);
    }

    #[test]
    fn charts_roundtrip_through_json() {
        let d = PlanarDomain::rectangle(0.25, 1.0, 0.25, 1.0).unwrap();
        let f = PartialFoliation::from_quad_diff(&QuadDiff::parse("(mul (z) (dz2))", d).unwrap(), 2).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let back: PartialFoliation = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }
}
