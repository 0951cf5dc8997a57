//! Horizontal trajectories: integral curves of `Im(√φ dz) = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use crate::foliation::TransverseArc;
use crate::qd::QuadDiff;
use crate::quadrature::{adaptive_1d, Rect};

/// Winding number of `f` around the rectangle boundary. Fails with
/// `ZeroOnChartBoundary` where `|f|` drops below `floor` on the boundary.
pub(crate) fn winding_number(f: &dyn Fn(Complex64) -> Result<Complex64>, r: &Rect, floor: f64) -> Result<i64> {
    let corners = [
        Complex64::new(r.x0, r.y0),
        Complex64::new(r.x1, r.y0),
        Complex64::new(r.x1, r.y1),
        Complex64::new(r.x0, r.y1),
    ];
    let check = |z: Complex64| -> Result<Complex64> {
        let v = f(z)?;
        if v.norm() < floor || !v.is_finite() {
            Err(Error::ZeroOnChartBoundary(format!("near {z}")))
        } else {
            Ok(v)
        }
    };
    fn turn(
        check: &dyn Fn(Complex64) -> Result<Complex64>,
        a: Complex64,
        fa: Complex64,
        b: Complex64,
        fb: Complex64,
        depth: u32,
    ) -> Result<f64> {
        let d = (fb / fa).arg();
        if d.abs() < PI / 8.0 || depth > 24 {
            return Ok(d);
        }
        let m = 0.5 * (a + b);
        let fm = check(m)?;
        Ok(turn(check, a, fa, m, fm, depth + 1)? + turn(check, m, fm, b, fb, depth + 1)?)
    }
    let mut total = 0.0;
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        const PIECES: usize = 16;
        let mut za = a;
        let mut fa = check(a)?;
        for s in 1..=PIECES {
            let zb = a + (b - a) * (s as f64 / PIECES as f64);
            let fb = check(zb)?;
            total += turn(&check, za, fa, zb, fb, 0)?;
            za = zb;
            fa = fb;
        }
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

/// A zero of order `k` with its `k + 2` horizontal prongs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityInfo {
    pub location: [f64; 2],
    pub order: u32,
    pub prong_count: u32,
    pub prong_directions: Vec<f64>,
}

impl SingularityInfo {
    pub fn point(&self) -> Complex64 {
        Complex64::new(self.location[0], self.location[1])
    }

    /// Stopping radius `step_tol^{2/(k+2)}`.
    pub fn singular_radius(&self, step_tol: f64) -> f64 {
        step_tol.powf(2.0 / (self.order as f64 + 2.0))
    }
}

fn zero_floor(scale: f64) -> f64 {
    1e-12 * scale.max(1e-300)
}

/// Zeros of `qd` inside its domain, located by winding numbers on a
/// `resolution × resolution` cover of each domain tile and polished by
/// Newton's method. Poles are skipped.
pub fn find_zeros(qd: &QuadDiff, resolution: usize) -> Result<Vec<SingularityInfo>> {
    if qd.expr.as_constant().is_some() {
        return Ok(Vec::new());
    }
    let f = |z: Complex64| qd.eval_unchecked(z);
    // typical size of |φ| fixes the floor below which a boundary sample is a zero
    let bb = qd.domain.bbox();
    let mut scale: f64 = 0.0;
    for p in 0..4 {
        for q in 0..4 {
            let z = Complex64::new(bb.x0 + (bb.x1 - bb.x0) * (p as f64 + 0.5) / 4.0, bb.y0 + (bb.y1 - bb.y0) * (q as f64 + 0.5) / 4.0);
            if let Ok(v) = f(z) {
                scale = scale.max(v.norm());
            }
        }
    }
    let floor = zero_floor(scale);
    let res = resolution.max(1);
    let mut jitter = 0.0;
    'attempt: for _ in 0..6 {
        let mut cells = Vec::new();
        for t in qd.domain.rectangles() {
            let cut = |k: usize, lo: f64, hi: f64| {
                if k == 0 || k == res {
                    lo + (hi - lo) * k as f64 / res as f64
                } else {
                    lo + (hi - lo) * (k as f64 + jitter) / res as f64
                }
            };
            for i in 0..res {
                for j in 0..res {
                    cells.push(Rect::new(cut(i, t.x0, t.x1), cut(i + 1, t.x0, t.x1), cut(j, t.y0, t.y1), cut(j + 1, t.y0, t.y1)));
                }
            }
        }
        let mut found: Vec<SingularityInfo> = Vec::new();
        let min_size = 1e-4 * bb.diameter();
        let mut stack: Vec<Rect> = Vec::new();
        for c in cells {
            match winding_number(&f, &c, floor) {
                Ok(n) if n > 0 => stack.push(c),
                Ok(_) => {}
                Err(Error::ZeroOnChartBoundary(msg)) => {
                    if on_domain_boundary(&qd.domain, &c, &f, floor) {
                        return Err(Error::ZeroOnBoundary(msg));
                    }
                    jitter += 0.1234;
                    continue 'attempt;
                }
                Err(e) => return Err(e),
            }
        }
        while let Some(r) = stack.pop() {
            if r.diameter() < min_size {
                let n = winding_number(&f, &r, floor).unwrap_or(1).max(1) as u32;
                let z = polish(&f, Complex64::new(0.5 * (r.x0 + r.x1), 0.5 * (r.y0 + r.y1)), n, r.diameter());
                if !qd.domain.contains_closed(z, 0.0) || found.iter().any(|s| (s.point() - z).norm() < min_size) {
                    continue;
                }
                found.push(singularity(&f, z, n, min_size));
                continue;
            }
            let (xm, ym) = (0.5 * (r.x0 + r.x1), 0.5 * (r.y0 + r.y1));
            // off-centre split keeps symmetric zeros off the cut lines
            let (xm, ym) = (xm + 0.0137 * (r.x1 - r.x0), ym + 0.0113 * (r.y1 - r.y0));
            for c in [
                Rect::new(r.x0, xm, r.y0, ym),
                Rect::new(xm, r.x1, r.y0, ym),
                Rect::new(r.x0, xm, ym, r.y1),
                Rect::new(xm, r.x1, ym, r.y1),
            ] {
                match winding_number(&f, &c, floor) {
                    Ok(n) if n > 0 => stack.push(c),
                    Ok(_) => {}
                    Err(Error::ZeroOnChartBoundary(_)) => {
                        jitter += 0.1234;
                        continue 'attempt;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        found.sort_by(|a, b| a.location.partial_cmp(&b.location).expect("finite"));
        return Ok(found);
    }
    Err(Error::ZeroOnBoundary("cell boundaries kept meeting zeros".into()))
}

fn on_domain_boundary(d: &PlanarDomain, r: &Rect, f: &dyn Fn(Complex64) -> Result<Complex64>, floor: f64) -> bool {
    let corners = [
        Complex64::new(r.x0, r.y0),
        Complex64::new(r.x1, r.y0),
        Complex64::new(r.x1, r.y1),
        Complex64::new(r.x0, r.y1),
    ];
    (0..4).any(|k| {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        (0..=256).any(|s| {
            let z = a + (b - a) * (s as f64 / 256.0);
            d.distance_to_boundary(z) <= 1e-12 && f(z).is_ok_and(|v| v.norm() < floor * 1e3)
        })
    })
}

fn polish(f: &dyn Fn(Complex64) -> Result<Complex64>, z0: Complex64, order: u32, size: f64) -> Complex64 {
    let mut z = z0;
    let h = 1e-3 * size;
    for _ in 0..40 {
        let (Ok(v), Ok(p), Ok(m)) = (f(z), f(z + h), f(z - h)) else { break };
        let d = (p - m) / (2.0 * h);
        if d.norm() == 0.0 {
            break;
        }
        let step = v / d * order as f64;
        if !step.is_finite() || step.norm() > size {
            break;
        }
        z -= step;
        if step.norm() < 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    if (z - z0).norm() > size { z0 } else { z }
}

fn singularity(f: &dyn Fn(Complex64) -> Result<Complex64>, z: Complex64, order: u32, size: f64) -> SingularityInfo {
    // leading coefficient of φ ≈ c (w − z)^k from a small circle
    let r = 0.1 * size;
    let mut c = Complex64::new(0.0, 0.0);
    for j in 0..8 {
        let u = Complex64::from_polar(r, 2.0 * PI * j as f64 / 8.0);
        if let Ok(v) = f(z + u) {
            c += v / u.powu(order) / 8.0;
        }
    }
    let n = order + 2;
    let prong_directions = (0..n).map(|j| ((2.0 * PI * j as f64 - c.arg()) / n as f64).rem_euclid(2.0 * PI)).collect();
    SingularityInfo { location: [z.re, z.im], order, prong_count: n, prong_directions }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Classification {
    Closed,
    /// Both ends on the boundary: `a` at the start of the polyline, `b` at
    /// its end.
    CrossCut { a: [f64; 2], b: [f64; 2] },
    /// Budget exhausted without reaching the boundary or closing up.
    Transient { budget_used: f64 },
    SingularHit { zero: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: [f64; 2],
    pub points: Vec<[f64; 2]>,
    /// `|φ|^{1/2}`-length from the first point.
    pub stamps: Vec<f64>,
    /// +1 where the continued root agrees with the principal one.
    pub branch: Vec<i8>,
    pub classification: Classification,
}

impl Trajectory {
    pub fn points_c(&self) -> Vec<Complex64> {
        self.points.iter().map(|p| Complex64::new(p[0], p[1])).collect()
    }

    pub fn is_crosscut(&self) -> bool {
        matches!(self.classification, Classification::CrossCut { .. })
    }

    pub fn length(&self) -> f64 {
        self.stamps.last().copied().unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,y,branch\n");
        for ((p, t), b) in self.points.iter().zip(&self.stamps).zip(&self.branch) {
            s.push_str(&format!("{t},{},{},{b}\n", p[0], p[1]));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub step_tol: f64,
    /// Distance to the boundary at which a leaf is taken to end there.
    pub boundary_tol: f64,
    /// Smallest metric step before giving up.
    pub min_step: f64,
    /// Largest Euclidean step, as a fraction of the domain diameter.
    pub max_chord: f64,
    pub max_steps: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { step_tol: 1e-8, boundary_tol: 1e-10, min_step: 1e-14, max_chord: 0.02, max_steps: 200_000 }
    }
}

impl TraceOptions {
    pub fn with_step_tol(step_tol: f64) -> Self {
        TraceOptions { step_tol, ..Default::default() }
    }

    pub fn closure_tol(&self) -> f64 {
        10.0 * self.step_tol
    }
}

/// Traces leaves of one differential, reusing its zero set.
pub struct Tracer<'a> {
    pub qd: &'a QuadDiff,
    pub zeros: Vec<SingularityInfo>,
    pub opts: TraceOptions,
}

enum End {
    Boundary,
    Closed,
    Budget,
    Zero(Complex64),
}

struct Leg {
    points: Vec<Complex64>,
    stamps: Vec<f64>,
    roots: Vec<Complex64>,
    end: End,
}

// Dormand-Prince 5(4)
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl<'a> Tracer<'a> {
    pub fn new(qd: &'a QuadDiff, opts: TraceOptions) -> Result<Self> {
        let zeros = find_zeros(qd, 8)?;
        Ok(Tracer { qd, zeros, opts })
    }

    /// Continued root at `z`, matched to `prev`; `None` if the branch is
    /// ambiguous or `φ` cannot be evaluated.
    fn root(&self, z: Complex64, prev: Complex64) -> Option<Complex64> {
        let s = self.qd.eval_unchecked(z).ok()?.sqrt();
        if !s.is_finite() || s.norm() == 0.0 {
            return None;
        }
        let s = if (s - prev).norm() > (s + prev).norm() { -s } else { s };
        // rotation by more than ~30° in one step is not a continuation
        if (s - prev).norm() > 0.5 * s.norm().max(prev.norm()) {
            return None;
        }
        Some(s)
    }

    /// One Dormand-Prince step of metric length `h`: new point, root there,
    /// and error estimate.
    fn step(&self, z: Complex64, r: Complex64, h: f64, dir: f64) -> Option<(Complex64, Complex64, f64)> {
        let mut k = [Complex64::new(0.0, 0.0); 7];
        let mut roots = [r; 7];
        k[0] = dir / r;
        for i in 1..7 {
            let mut zi = z;
            for j in 0..i {
                zi += k[j] * (h * A[i - 1][j]);
            }
            roots[i] = self.root(zi, roots[i - 1])?;
            k[i] = dir / roots[i];
        }
        let mut z1 = z;
        for j in 0..6 {
            z1 += k[j] * (h * A[5][j]);
        }
        let mut err = Complex64::new(0.0, 0.0);
        for j in 0..7 {
            err += k[j] * (h * E[j]);
        }
        // stage 7 is evaluated at z1
        Some((z1, roots[6], err.norm()))
    }

    fn near_zero(&self, a: Complex64, b: Complex64) -> Option<Complex64> {
        self.zeros.iter().find_map(|s| {
            let p = s.point();
            let d = crate::domain::point_segment_distance(p, a, b);
            (d < s.singular_radius(self.opts.step_tol)).then_some(p)
        })
    }

    fn leg(&self, z0: Complex64, r0: Complex64, dir: f64, budget: f64, closable: bool) -> Result<Leg> {
        let o = &self.opts;
        let domain = &self.qd.domain;
        let diam = domain.bbox().diameter();
        let max_chord = o.max_chord * diam;
        let mut leg = Leg { points: vec![z0], stamps: vec![0.0], roots: vec![r0], end: End::Budget };
        let (mut z, mut r, mut t) = (z0, r0, 0.0);
        let tangent = (dir / r0) / (dir / r0).norm();
        let section = |w: Complex64| ((w - z0) * tangent.conj()).re;
        let mut left_start = false;
        let mut h = (max_chord * r0.norm()).min(budget);
        let mut steps = 0;
        while t < budget {
            steps += 1;
            if steps > o.max_steps {
                return Err(Error::StepCollapse(format!("step limit reached near {z}")));
            }
            h = h.min(budget - t);
            if h < o.min_step {
                if budget - t <= o.min_step {
                    break;
                }
                return Err(Error::StepCollapse(format!("step below {} near {z}", o.min_step)));
            }
            let Some((z1, r1, err)) = self.step(z, r, h, dir) else {
                h *= 0.25;
                continue;
            };
            let chord = (z1 - z).norm();
            if chord > max_chord {
                h *= 0.5 * max_chord / chord;
                continue;
            }
            let allowed = o.step_tol * chord.max(1e-300);
            if err > allowed {
                h *= (0.9 * (allowed / err).powf(0.2)).max(0.1);
                continue;
            }
            // boundary: land on it by shrinking the final step
            if let Some((f, _)) = domain.segment_exit(z, z1).filter(|(f, _)| *f < 1.0) {
                if domain.distance_to_boundary(z) <= o.boundary_tol {
                    leg.end = End::Boundary;
                    break;
                }
                h *= (0.999 * f).max(1e-3);
                continue;
            }
            if !domain.contains_closed(z1, 0.0) {
                h *= 0.5;
                continue;
            }
            if let Some(p) = self.near_zero(z, z1) {
                leg.points.push(p);
                leg.stamps.push(t + h);
                leg.roots.push(r1);
                leg.end = End::Zero(p);
                return Ok(leg);
            }
            if closable {
                let (g0, g1) = (section(z), section(z1));
                if left_start && g0 < 0.0 && g1 >= 0.0 {
                    // land on the section by a secant iteration on the step length
                    let (mut ha, mut ga, mut hb, mut gb) = (0.0, g0, h, g1);
                    let mut hit = (z1, r1, h);
                    for _ in 0..30 {
                        let hc = ha - ga * (hb - ha) / (gb - ga);
                        let Some((zc, rc, _)) = self.step(z, r, hc, dir) else { break };
                        let gc = section(zc);
                        hit = (zc, rc, hc);
                        if gc.abs() < 1e-3 * o.closure_tol() {
                            break;
                        }
                        if gc < 0.0 {
                            (ha, ga) = (hc, gc);
                        } else {
                            (hb, gb) = (hc, gc);
                        }
                    }
                    let (zc, rc, hc) = hit;
                    if (zc - z0).norm() <= o.closure_tol() && (rc - r0).norm() < (rc + r0).norm() {
                        leg.points.push(z0);
                        leg.stamps.push(t + hc);
                        leg.roots.push(r0);
                        leg.end = End::Closed;
                        return Ok(leg);
                    }
                }
                if (z1 - z0).norm() > 100.0 * o.closure_tol() && g1 < 0.0 {
                    left_start = true;
                }
            }
            t += h;
            z = z1;
            r = r1;
            leg.points.push(z);
            leg.stamps.push(t);
            leg.roots.push(r);
            if domain.distance_to_boundary(z) <= o.boundary_tol {
                leg.end = End::Boundary;
                break;
            }
            h *= if err > 0.0 { (0.9 * (allowed / err).powf(0.2)).clamp(0.2, 5.0) } else { 5.0 };
        }
        if let End::Boundary = leg.end {
            let last = leg.points.last_mut().expect("nonempty");
            *last = domain.boundary_point(domain.boundary_coordinate(*last));
        }
        Ok(leg)
    }

    /// Leaf through `z0`, traced both ways up to `budget` of `|φ|^{1/2}`-length
    /// in each direction.
    pub fn trace(&self, z0: Complex64, budget: f64) -> Result<Trajectory> {
        let v = self.qd.evaluate(z0)?;
        if v.norm() == 0.0 || self.zeros.iter().any(|s| (s.point() - z0).norm() < s.singular_radius(self.opts.step_tol)) {
            return Err(Error::StartAtZero);
        }
        let r0 = v.sqrt();
        let fwd = self.leg(z0, r0, 1.0, budget, true)?;
        let back = if let End::Closed = fwd.end { None } else { Some(self.leg(z0, r0, -1.0, budget, false)?) };
        let mut points = Vec::new();
        let mut stamps = Vec::new();
        let mut roots = Vec::new();
        let offset = back.as_ref().map_or(0.0, |b| *b.stamps.last().expect("nonempty"));
        if let Some(b) = &back {
            for k in (1..b.points.len()).rev() {
                points.push(b.points[k]);
                stamps.push(offset - b.stamps[k]);
                roots.push(b.roots[k]);
            }
        }
        for k in 0..fwd.points.len() {
            points.push(fwd.points[k]);
            stamps.push(offset + fwd.stamps[k]);
            roots.push(fwd.roots[k]);
        }
        let pair = |z: Complex64| [z.re, z.im];
        let classification = match (&fwd.end, back.as_ref().map(|b| &b.end)) {
            (End::Closed, _) => Classification::Closed,
            (End::Zero(p), _) | (_, Some(End::Zero(p))) => Classification::SingularHit { zero: pair(*p) },
            (End::Budget, _) | (_, Some(End::Budget)) => Classification::Transient { budget_used: *stamps.last().expect("nonempty") },
            _ => Classification::CrossCut { a: pair(points[0]), b: pair(*points.last().expect("nonempty")) },
        };
        let branch = points
            .iter()
            .zip(&roots)
            .map(|(z, r)| {
                let p = self.qd.eval_unchecked(*z).map(|v| v.sqrt()).unwrap_or(*r);
                if (p - r).norm() <= (p + r).norm() { 1 } else { -1 }
            })
            .collect();
        Ok(Trajectory { start: pair(z0), points: points.iter().map(|z| pair(*z)).collect(), stamps, branch, classification })
    }
}

pub fn trace_horizontal(qd: &QuadDiff, z0: Complex64, budget: f64, step_tol: f64) -> Result<Trajectory> {
    Tracer::new(qd, TraceOptions::with_step_tol(step_tol))?.trace(z0, budget)
}

/// `∫|Im(√φ dz)|` along a segment.
fn segment_mass(qd: &QuadDiff, a: Complex64, b: Complex64, t0: f64, t1: f64, tol: f64) -> Result<f64> {
    let d = b - a;
    let err = std::cell::RefCell::new(None);
    let f = |t: f64| match qd.eval_unchecked(a + d * t) {
        Ok(v) => (v.sqrt() * d).im.abs(),
        Err(e) => {
            err.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let (v, _) = adaptive_1d(&f, t0, t1, tol, 4000);
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Leaves through `count` points of the transversal spaced evenly in
/// transverse measure; each carries an equal share of the total measure.
pub fn sample_leaves(
    qd: &QuadDiff,
    transversal: &TransverseArc,
    count: usize,
    budget: f64,
    opts: TraceOptions,
) -> Result<Vec<(Trajectory, f64)>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let tracer = Tracer::new(qd, opts)?;
    let pts = transversal.vertices();
    let tol = 1e-12;
    let masses: Vec<f64> = pts.windows(2).map(|w| segment_mass(qd, w[0], w[1], 0.0, 1.0, tol)).collect::<Result<_>>()?;
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return Err(Error::ConfigurationInvalid("the transversal carries no transverse measure".into()));
    }
    let weight = total / count as f64;
    let mut starts = Vec::with_capacity(count);
    for k in 0..count {
        let mut target = (k as f64 + 0.5) * weight;
        let mut seg = 0;
        while seg + 1 < masses.len() && target > masses[seg] {
            target -= masses[seg];
            seg += 1;
        }
        let (a, b) = (pts[seg], pts[seg + 1]);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if segment_mass(qd, a, b, 0.0, mid, tol)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        starts.push(a + (b - a) * (0.5 * (lo + hi)));
    }
    starts.par_iter().map(|z| Ok((tracer.trace(*z, budget)?, weight))).collect()
}
