//! Finite measured laminations given by weighted boundary endpoint pairs,
//! and their intersection numbers.

use std::cmp::Ordering;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DomainKind, PlanarDomain};
use crate::error::{Error, Result};
use crate::foliation::{LevelFunction, PartialFoliation};
use crate::qd::QuadDiff;
use crate::quadrature::{adaptive_1d, gl16_interval};
use crate::svg::Canvas;
use crate::trajectory::{Classification, TraceOptions, Tracer, Trajectory};

/// Correctly rounded running sum of floats and exact products
/// (Shewchuk partials).
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// Adds `a·b` without rounding.
    pub fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let e = a.mul_add(b, -p);
        self.add(p);
        if e != 0.0 {
            self.add(e);
        }
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(&last) = p.last() else { return 0.0 };
        let mut n = p.len() - 1;
        let mut hi = last;
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // round half to even across the remaining partials
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = 2.0 * lo;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

/// A leaf: endpoints in normalized boundary coordinates and a weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub a: f64,
    pub b: f64,
    pub w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Trajectory>,
}

impl Leaf {
    pub fn new(a: f64, b: f64, w: f64) -> Self {
        Leaf { a: a.rem_euclid(1.0), b: b.rem_euclid(1.0), w, witness: None }
    }

    pub fn pair(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    fn key(&self) -> (f64, f64) {
        (self.a.min(self.b), self.a.max(self.b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    Cross,
    Disjoint,
    /// The pairs share an endpoint; never counted as a crossing.
    SharedEndpoint,
}

const ENDPOINT_EPS: f64 = 1e-12;

fn cyclic_gap(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(1.0);
    d.min(1.0 - d)
}

pub fn crossing(p: (f64, f64), q: (f64, f64)) -> Crossing {
    if [q.0, q.1].iter().any(|&x| cyclic_gap(x, p.0) <= ENDPOINT_EPS || cyclic_gap(x, p.1) <= ENDPOINT_EPS) {
        return Crossing::SharedEndpoint;
    }
    let len = (p.1 - p.0).rem_euclid(1.0);
    let inside = |x: f64| (x - p.0).rem_euclid(1.0) < len;
    if inside(q.0) != inside(q.1) { Crossing::Cross } else { Crossing::Disjoint }
}

/// Strict cyclic interleaving of two endpoint pairs.
pub fn crosses(p: (f64, f64), q: (f64, f64)) -> bool {
    crossing(p, q) == Crossing::Cross
}

/// Endpoint pair of a cross-cut leaf in boundary coordinates.
pub fn straighten(traj: &Trajectory, ambient: &PlanarDomain) -> Result<(f64, f64)> {
    match traj.classification {
        Classification::CrossCut { a, b } => Ok((
            ambient.boundary_coordinate(Complex64::new(a[0], a[1])),
            ambient.boundary_coordinate(Complex64::new(b[0], b[1])),
        )),
        _ => Err(Error::NotACrosscut),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLamination {
    pub leaves: Vec<Leaf>,
    pub ambient: PlanarDomain,
}

#[derive(Serialize, Deserialize)]
struct LeavesJson {
    leaves: Vec<Leaf>,
}

fn near_equal(p: (f64, f64), q: (f64, f64), tol: f64) -> bool {
    (cyclic_gap(p.0, q.0) <= tol && cyclic_gap(p.1, q.1) <= tol) || (cyclic_gap(p.0, q.1) <= tol && cyclic_gap(p.1, q.0) <= tol)
}

impl DiscreteLamination {
    /// Checks positivity and disjointness of the leaves.
    pub fn new(leaves: Vec<Leaf>, ambient: PlanarDomain) -> Result<Self> {
        if leaves.iter().any(|l| !(l.w > 0.0) || !l.w.is_finite()) {
            return Err(Error::ConfigurationInvalid("leaf weights must be positive and finite".into()));
        }
        for i in 0..leaves.len() {
            for j in 0..i {
                if crosses(leaves[i].pair(), leaves[j].pair()) {
                    return Err(Error::InterleavingWithinLamination);
                }
            }
        }
        Ok(DiscreteLamination { leaves, ambient })
    }

    pub fn empty(ambient: PlanarDomain) -> Self {
        DiscreteLamination { leaves: Vec::new(), ambient }
    }

    /// Lamination of straightened cross-cuts. Leaves whose endpoints agree
    /// within `merge_tol` are merged; other interleavings are errors.
    pub fn from_samples(samples: &[(Trajectory, f64)], ambient: &PlanarDomain, merge_tol: f64) -> Result<Self> {
        let mut leaves: Vec<Leaf> = Vec::new();
        for (t, w) in samples {
            let (a, b) = straighten(t, ambient)?;
            if *w <= 0.0 {
                continue;
            }
            let p = (a, b);
            if let Some(l) = leaves.iter_mut().find(|l| near_equal(l.pair(), p, merge_tol)) {
                l.w += w;
                continue;
            }
            if leaves.iter().any(|l| crosses(l.pair(), p)) {
                return Err(Error::InterleavingWithinLamination);
            }
            leaves.push(Leaf { a, b, w: *w, witness: Some(t.clone()) });
        }
        Ok(DiscreteLamination { leaves, ambient: ambient.clone() })
    }

    pub fn total_weight(&self) -> f64 {
        let mut s = ExactSum::new();
        for l in &self.leaves {
            s.add(l.w);
        }
        s.value()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let leaves = self.leaves.iter().map(|l| Leaf { w: l.w * c, ..l.clone() }).collect();
        DiscreteLamination { leaves, ambient: self.ambient.clone() }
    }

    pub fn to_json(&self) -> String {
        let leaves = self.leaves.iter().map(|l| Leaf { witness: None, ..l.clone() }).collect();
        serde_json::to_string(&LeavesJson { leaves }).expect("leaves serialize")
    }

    pub fn from_json(s: &str, ambient: PlanarDomain) -> Result<Self> {
        let j: LeavesJson = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        DiscreteLamination::new(j.leaves, ambient)
    }

    /// Leaf indices sorted by their lower endpoint, then the upper one.
    fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.leaves.len()).collect();
        idx.sort_by(|&i, &j| {
            let (p, q) = (self.leaves[i].key(), self.leaves[j].key());
            p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)).then(i.cmp(&j))
        });
        idx
    }

    fn cmp_leaves(&self, other: &Self) -> Ordering {
        for (l, m) in self.leaves.iter().zip(&other.leaves) {
            let o = l.a.total_cmp(&m.a).then(l.b.total_cmp(&m.b)).then(l.w.total_cmp(&m.w));
            if o != Ordering::Equal {
                return o;
            }
        }
        self.leaves.len().cmp(&other.leaves.len())
    }
}

/// `Σ w_μ w_ν` over crossing leaf pairs, correctly rounded.
pub fn intersection_number(mu: &DiscreteLamination, nu: &DiscreteLamination) -> Result<f64> {
    if !mu.ambient.same_shape(&nu.ambient) {
        return Err(Error::AmbientMismatch);
    }
    // a fixed operand order makes the result symmetric bit for bit
    let (p, q) = if mu.cmp_leaves(nu) == Ordering::Greater { (nu, mu) } else { (mu, nu) };
    let parts: Vec<ExactSum> = p
        .leaves
        .par_iter()
        .map(|l| {
            let mut s = ExactSum::new();
            for m in &q.leaves {
                if crosses(l.pair(), m.pair()) {
                    s.add_product(l.w, m.w);
                }
            }
            s
        })
        .collect();
    let mut total = ExactSum::new();
    for s in &parts {
        total.merge(s);
    }
    Ok(total.value())
}

/// A block of consecutive μ-leaves crossing a block of consecutive
/// ν-leaves, in the orders stored on the cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pub mu: (usize, usize),
    pub nu: (usize, usize),
    pub mu_mass: f64,
    pub nu_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadCover {
    pub quads: Vec<Quad>,
    pub mu_order: Vec<usize>,
    pub nu_order: Vec<usize>,
}

pub fn build_quad_cover(mu: &DiscreteLamination, nu: &DiscreteLamination) -> Result<QuadCover> {
    if !mu.ambient.same_shape(&nu.ambient) {
        return Err(Error::AmbientMismatch);
    }
    let (mo, no) = (mu.order(), nu.order());
    let (n, m) = (mo.len(), no.len());
    let cross: Vec<Vec<bool>> = mo.iter().map(|&i| no.iter().map(|&j| crosses(mu.leaves[i].pair(), nu.leaves[j].pair())).collect()).collect();
    let mut used = vec![vec![false; m]; n];
    let mut quads = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if !cross[i][j] || used[i][j] {
                continue;
            }
            let mut j1 = j + 1;
            while j1 < m && cross[i][j1] && !used[i][j1] {
                j1 += 1;
            }
            let mut i1 = i + 1;
            while i1 < n && (j..j1).all(|k| cross[i1][k] && !used[i1][k]) {
                i1 += 1;
            }
            for row in used.iter_mut().take(i1).skip(i) {
                for u in row.iter_mut().take(j1).skip(j) {
                    *u = true;
                }
            }
            let sum = |lam: &DiscreteLamination, ord: &[usize], r: std::ops::Range<usize>| {
                let mut s = ExactSum::new();
                for k in r {
                    s.add(lam.leaves[ord[k]].w);
                }
                s.value()
            };
            quads.push(Quad { mu: (i, i1), nu: (j, j1), mu_mass: sum(mu, &mo, i..i1), nu_mass: sum(nu, &no, j..j1) });
        }
    }
    Ok(QuadCover { quads, mu_order: mo, nu_order: no })
}

impl QuadCover {
    /// `Σ_k (μ × ν)(Q_k)`, correctly rounded.
    pub fn evaluate(&self, mu: &DiscreteLamination, nu: &DiscreteLamination) -> f64 {
        let mut total = ExactSum::new();
        for q in &self.quads {
            for i in q.mu.0..q.mu.1 {
                for j in q.nu.0..q.nu.1 {
                    total.add_product(mu.leaves[self.mu_order[i]].w, nu.leaves[self.nu_order[j]].w);
                }
            }
        }
        total.value()
    }

    /// Quads are pairwise disjoint and each crossing pair lies in exactly one.
    pub fn verify(&self, mu: &DiscreteLamination, nu: &DiscreteLamination) -> bool {
        let (n, m) = (self.mu_order.len(), self.nu_order.len());
        let mut hits = vec![vec![0u32; m]; n];
        for q in &self.quads {
            for row in hits.iter_mut().take(q.mu.1).skip(q.mu.0) {
                for h in row.iter_mut().take(q.nu.1).skip(q.nu.0) {
                    *h += 1;
                }
            }
        }
        (0..n).all(|i| {
            (0..m).all(|j| {
                let c = crosses(mu.leaves[self.mu_order[i]].pair(), nu.leaves[self.nu_order[j]].pair());
                hits[i][j] == u32::from(c)
            })
        })
    }

    /// Leaves as straight chords, quads shaded between their corner chords.
    pub fn to_svg(&self, mu: &DiscreteLamination, nu: &DiscreteLamination, size: f64) -> String {
        let d = &mu.ambient;
        let mut c = Canvas::for_domain(d, size);
        let chord = |l: &Leaf| (d.boundary_point(l.a), d.boundary_point(l.b));
        for q in &self.quads {
            let corners = [
                (q.mu.0, q.nu.0),
                (q.mu.0, q.nu.1 - 1),
                (q.mu.1 - 1, q.nu.1 - 1),
                (q.mu.1 - 1, q.nu.0),
            ];
            let pts: Vec<Complex64> = corners
                .iter()
                .filter_map(|&(i, j)| {
                    let (a, b) = chord(&mu.leaves[self.mu_order[i]]);
                    let (p, r) = chord(&nu.leaves[self.nu_order[j]]);
                    crate::domain::segment_intersection(a, b, p, r).map(|(t, _)| a + (b - a) * t)
                })
                .collect();
            if pts.len() == 4 {
                c.polygon(&pts, "#f5b041", 0.5);
            }
        }
        for l in &mu.leaves {
            let (a, b) = chord(l);
            c.polyline(&[a, b], "#1f77b4", 0.8);
        }
        for l in &nu.leaves {
            let (a, b) = chord(l);
            c.polyline(&[a, b], "#d62728", 0.8);
        }
        c.finish()
    }
}

/// Where leaves come from: a differential's horizontal trajectories, or a
/// foliation given by affine charts.
#[derive(Debug, Clone)]
pub enum LeafSource {
    Differential(QuadDiff),
    Foliation(PartialFoliation),
}

impl LeafSource {
    pub fn domain(&self) -> &PlanarDomain {
        match self {
            LeafSource::Differential(q) => &q.domain,
            LeafSource::Foliation(f) => &f.domain,
        }
    }

    /// `‖φ‖` for a differential, `D(F)` for a foliation.
    pub fn norm(&self, tol: f64) -> Result<f64> {
        match self {
            LeafSource::Differential(q) => q.l1_norm(tol),
            LeafSource::Foliation(f) => f.dirichlet_integral(tol),
        }
    }

    /// Transverse density along direction `t` at `z`.
    fn density(&self, z: Complex64, t: Complex64) -> Result<f64> {
        match self {
            LeafSource::Differential(q) => Ok((q.eval_unchecked(z)?.sqrt() * t).im.abs()),
            LeafSource::Foliation(f) => match f.charts.iter().find(|c| c.supports(z)) {
                Some(c) => {
                    let g = c.gradient(z)?;
                    Ok((g.re * t.re + g.im * t.im).abs())
                }
                None => Ok(0.0),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    /// Start points on the boundary per lamination.
    pub samples: usize,
    pub budget: f64,
    pub step_tol: f64,
    /// Endpoint tolerance for merging nearly equal leaves.
    pub merge_tol: f64,
    /// Largest admissible fraction of mass on leaves that are not cross-cuts.
    pub max_unassigned: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { samples: 800, budget: 50.0, step_tol: 1e-9, merge_tol: 1e-7, max_unassigned: 0.05 }
    }
}

enum Piece {
    Segment(Complex64, Complex64),
    Circle,
}

impl Piece {
    /// Point, derivative, and inward unit normal at parameter `s ∈ [0, 1]`.
    fn at(&self, s: f64) -> (Complex64, Complex64, Complex64) {
        match *self {
            Piece::Segment(a, b) => {
                let d = b - a;
                (a + d * s, d, Complex64::i() * d / d.norm())
            }
            Piece::Circle => {
                let z = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * s);
                (z, Complex64::i() * z * (2.0 * std::f64::consts::PI), -z)
            }
        }
    }
}

fn boundary_pieces(d: &PlanarDomain) -> Vec<Piece> {
    match d.kind {
        DomainKind::UnitDisk => vec![Piece::Circle],
        DomainKind::Rectilinear { .. } => d.edges().into_iter().map(|(a, b)| Piece::Segment(a, b)).collect(),
    }
}

/// Leaves sampled from the boundary.
#[derive(Debug, Clone)]
pub struct BoundarySample {
    pub leaves: Vec<(Trajectory, f64)>,
    /// Transverse measure of the boundary; every cross-cut meets it twice.
    pub boundary_mass: f64,
}

const SUBDIVISIONS: usize = 64;

/// Leaves through `count` boundary points spaced evenly in transverse
/// measure. Each cross-cut is met twice, so each sample carries half of its
/// share of the boundary measure.
pub fn sample_boundary_leaves(source: &LeafSource, count: usize, budget: f64, opts: TraceOptions) -> Result<BoundarySample> {
    let domain = source.domain();
    let pieces = boundary_pieces(domain);
    let err = std::sync::Mutex::new(None);
    let dens = |p: &Piece, s: f64| {
        let (z, dz, _) = p.at(s);
        source.density(z, dz).unwrap_or_else(|e| {
            err.lock().expect("lock").get_or_insert(e);
            0.0
        })
    };
    let mut cells = Vec::new();
    for (k, p) in pieces.iter().enumerate() {
        for j in 0..SUBDIVISIONS {
            let (s0, s1) = (j as f64 / SUBDIVISIONS as f64, (j + 1) as f64 / SUBDIVISIONS as f64);
            let (m, _) = adaptive_1d(&|s| dens(p, s), s0, s1, 1e-14, 200);
            cells.push((k, s0, s1, m));
        }
    }
    if let Some(e) = err.lock().expect("lock").take() {
        return Err(e);
    }
    let mut total = ExactSum::new();
    for c in &cells {
        total.add(c.3);
    }
    let total = total.value();
    if count == 0 || total <= 0.0 {
        return Ok(BoundarySample { leaves: Vec::new(), boundary_mass: total });
    }
    let share = total / count as f64;
    let mut starts = Vec::with_capacity(count);
    let (mut cell, mut before) = (0, 0.0);
    for k in 0..count {
        let target = (k as f64 + 0.5) * share;
        while cell + 1 < cells.len() && before + cells[cell].3 < target {
            before += cells[cell].3;
            cell += 1;
        }
        let (pk, s0, s1, _) = cells[cell];
        let p = &pieces[pk];
        let want = target - before;
        let (mut lo, mut hi) = (s0, s1);
        for _ in 0..55 {
            let mid = 0.5 * (lo + hi);
            if gl16_interval(&|s| dens(p, s), s0, mid) < want {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        starts.push(p.at(0.5 * (lo + hi)));
    }
    let diam = domain.bbox().diameter();
    let leaves: Vec<(Trajectory, f64)> = match source {
        LeafSource::Differential(qd) => {
            let tracer = Tracer::new(qd, opts)?;
            starts
                .par_iter()
                .map(|(z, _, n)| Ok((tracer.trace(z + n * (1e-9 * diam), budget)?, 0.5 * share)))
                .collect::<Result<_>>()?
        }
        LeafSource::Foliation(f) => starts.iter().map(|(z, _, _)| Ok((foliation_leaf(f, *z)?, 0.5 * share))).collect::<Result<_>>()?,
    };
    Ok(BoundarySample { leaves, boundary_mass: total })
}

/// Leaf of an affine chart through `z`, clipped to the chart support; a
/// cross-cut if both ends reach the boundary.
fn foliation_leaf(f: &PartialFoliation, z: Complex64) -> Result<Trajectory> {
    let chart = f
        .charts
        .iter()
        .find(|c| c.supports(z))
        .ok_or_else(|| Error::FamilyNotRepresentable(format!("no chart supports {z}")))?;
    let LevelFunction::Affine { a, b, .. } = chart.v else {
        return Err(Error::FamilyNotRepresentable("leaves are followed in affine charts only".into()));
    };
    if chart.warp != crate::foliation::Diffeo::Identity {
        return Err(Error::FamilyNotRepresentable("leaves are followed in unwarped charts only".into()));
    }
    let r = chart.support.map_or(chart.rect, |s| {
        crate::quadrature::Rect::new(s.x0.max(chart.rect.x0), s.x1.min(chart.rect.x1), s.y0.max(chart.rect.y0), s.y1.min(chart.rect.y1))
    });
    let g = Complex64::new(a, b);
    let d = Complex64::i() * g / g.norm();
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for (p, dp, lo, hi) in [(z.re, d.re, r.x0, r.x1), (z.im, d.im, r.y0, r.y1)] {
        if dp.abs() > 1e-300 {
            let (u, v) = ((lo - p) / dp, (hi - p) / dp);
            t0 = t0.max(u.min(v));
            t1 = t1.min(u.max(v));
        }
    }
    let (e0, e1) = (z + d * t0, z + d * t1);
    let pair = |w: Complex64| [w.re, w.im];
    let tol = 1e-9 * f.domain.bbox().diameter();
    let length = (t1 - t0) * g.norm();
    let classification = if f.domain.distance_to_boundary(e0) <= tol && f.domain.distance_to_boundary(e1) <= tol {
        Classification::CrossCut { a: pair(e0), b: pair(e1) }
    } else {
        Classification::Transient { budget_used: length }
    };
    Ok(Trajectory { start: pair(z), points: vec![pair(e0), pair(e1)], stamps: vec![0.0, length], branch: vec![1, 1], classification })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionEstimate {
    pub value: f64,
    /// Sampling error (against half as many samples) plus unassigned mass.
    pub error: f64,
    pub half_resolution: f64,
    /// Mass on leaves that are not cross-cuts, per side.
    pub unassigned: [f64; 2],
    /// Total leaf mass, per side.
    pub mass: [f64; 2],
    pub leaves: [usize; 2],
}

struct Sampled {
    lam: DiscreteLamination,
    unassigned: f64,
    mass: f64,
}

fn laminate(source: &LeafSource, samples: usize, cfg: &SampleConfig) -> Result<Sampled> {
    let opts = TraceOptions::with_step_tol(cfg.step_tol);
    let s = sample_boundary_leaves(source, samples, cfg.budget, opts)?;
    let mass = 0.5 * s.boundary_mass;
    let mut unassigned = ExactSum::new();
    let mut cuts = Vec::new();
    for (t, w) in s.leaves {
        if t.is_crosscut() {
            cuts.push((t, w));
        } else {
            unassigned.add(w);
        }
    }
    let unassigned = unassigned.value();
    if mass > 0.0 && unassigned > cfg.max_unassigned * mass {
        return Err(Error::ExcessiveUnassignedMass(unassigned / mass));
    }
    Ok(Sampled { lam: DiscreteLamination::from_samples(&cuts, source.domain(), cfg.merge_tol)?, unassigned, mass })
}

/// Intersection number of the laminations of two leaf sources.
pub fn intersection_between(phi: &LeafSource, psi: &LeafSource, cfg: &SampleConfig) -> Result<IntersectionEstimate> {
    if !phi.domain().same_shape(psi.domain()) {
        return Err(Error::DomainMismatch);
    }
    let a = laminate(phi, cfg.samples, cfg)?;
    let b = laminate(psi, cfg.samples, cfg)?;
    let value = intersection_number(&a.lam, &b.lam)?;
    let half = intersection_number(&laminate(phi, cfg.samples / 2, cfg)?.lam, &laminate(psi, cfg.samples / 2, cfg)?.lam)?;
    let error = (value - half).abs() + a.unassigned * b.mass + b.unassigned * a.mass;
    Ok(IntersectionEstimate {
        value,
        error,
        half_resolution: half,
        unassigned: [a.unassigned, b.unassigned],
        mass: [a.mass, b.mass],
        leaves: [a.lam.leaves.len(), b.lam.leaves.len()],
    })
}

pub fn intersection_from_qds(phi: &QuadDiff, psi: &QuadDiff, cfg: &SampleConfig) -> Result<IntersectionEstimate> {
    intersection_between(&LeafSource::Differential(phi.clone()), &LeafSource::Differential(psi.clone()), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinskyReport {
    pub i: f64,
    pub i_error: f64,
    pub norm_phi: f64,
    pub norm_psi: f64,
    pub bound: f64,
    /// Error budget on `i² − bound`.
    pub combined_error: f64,
    pub holds: bool,
    pub slack: f64,
}

/// Checks `i(φ, ψ)² ≤ ‖φ‖ ‖ψ‖` within the combined error.
pub fn minsky_verify(phi: &LeafSource, psi: &LeafSource, cfg: &SampleConfig, tol: f64) -> Result<MinskyReport> {
    let est = intersection_between(phi, psi, cfg)?;
    let (np, nq) = (phi.norm(tol)?, psi.norm(tol)?);
    let bound = np * nq;
    let i = est.value;
    let combined_error = 2.0 * i * est.error + est.error * est.error + tol * (np + nq + tol);
    let slack = bound - i * i;
    Ok(MinskyReport { i, i_error: est.error, norm_phi: np, norm_psi: nq, bound, combined_error, holds: slack >= -combined_error, slack })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub n: usize,
    pub l1_distance: f64,
    pub i_n: f64,
    pub i_error: f64,
    pub gap: f64,
}

/// `|i(φ_n, ψ) − i(φ, ψ)|` along a sequence `φ_n → φ`; `seq[k]` is term `k + 1`.
pub fn continuity_experiment(seq: &[QuadDiff], limit: &QuadDiff, psi: &QuadDiff, cfg: &SampleConfig, tol: f64) -> Result<(f64, Vec<ContinuityRow>)> {
    let i_lim = intersection_from_qds(limit, psi, cfg)?.value;
    let rows = seq
        .iter()
        .enumerate()
        .map(|(k, q)| {
            let est = intersection_from_qds(q, psi, cfg)?;
            Ok(ContinuityRow { n: k + 1, l1_distance: q.l1_distance(limit, tol)?, i_n: est.value, i_error: est.error, gap: (est.value - i_lim).abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((i_lim, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foliation::Chart;
    use crate::quadrature::Rect;

    fn circle() -> PlanarDomain {
        PlanarDomain::unit_disk()
    }

    fn deg(a: f64, b: f64) -> (f64, f64) {
        (a / 360.0, b / 360.0)
    }

    #[test]
    fn crossing_examples() {
        assert!(crosses(deg(0.0, 180.0), deg(90.0, 270.0)));
        assert!(!crosses(deg(0.0, 90.0), deg(180.0, 270.0)));
        assert_eq!(crossing(deg(0.0, 180.0), deg(180.0, 270.0)), Crossing::SharedEndpoint);
        assert!(crosses(deg(350.0, 100.0), deg(10.0, 200.0)));
    }

    #[test]
    fn weighted_crossing_and_self_intersection() {
        let mu = DiscreteLamination::new(vec![Leaf::new(0.0, 0.5, 2.0)], circle()).unwrap();
        let nu = DiscreteLamination::new(vec![Leaf::new(0.25, 0.75, 3.0)], circle()).unwrap();
        assert_eq!(intersection_number(&mu, &nu).unwrap(), 6.0);
        assert_eq!(intersection_number(&mu, &mu).unwrap(), 0.0);
        assert!(matches!(
            intersection_number(&mu, &DiscreteLamination::empty(PlanarDomain::unit_square())),
            Err(Error::AmbientMismatch)
        ));
        let cover = build_quad_cover(&mu, &nu).unwrap();
        assert_eq!(cover.quads.len(), 1);
        assert_eq!(cover.evaluate(&mu, &nu), 6.0);
        assert!(build_quad_cover(&mu, &mu).unwrap().quads.is_empty());
    }

    #[test]
    fn interleaving_leaves_are_rejected() {
        let r = DiscreteLamination::new(vec![Leaf::new(0.0, 0.5, 1.0), Leaf::new(0.25, 0.75, 1.0)], circle());
        assert_eq!(r.unwrap_err(), Error::InterleavingWithinLamination);
    }

    #[test]
    fn exact_sum_is_correctly_rounded() {
        let mut s = ExactSum::new();
        for x in [1e100, 1.0, -1e100, 1e-100] {
            s.add(x);
        }
        assert_eq!(s.value(), 1.0);
        let mut p = ExactSum::new();
        p.add_product(0.1, 0.1);
        p.add(-0.1 * 0.1);
        assert_eq!(p.value(), 0.1f64.mul_add(0.1, -(0.1 * 0.1)));
    }

    #[test]
    fn json_roundtrip() {
        let mu = DiscreteLamination::new(vec![Leaf::new(0.12, 0.57, 0.25), Leaf::new(0.6, 0.9, 0.5)], circle()).unwrap();
        let s = mu.to_json();
        assert!(s.starts_with(r#"{"leaves":[{"a":0.12,"b":0.57,"w":0.25}"#));
        assert_eq!(DiscreteLamination::from_json(&s, circle()).unwrap(), mu);
    }

    #[test]
    fn horizontal_leaves_form_a_lamination() {
        let sq = PlanarDomain::unit_square();
        let s = sample_boundary_leaves(&LeafSource::Differential(QuadDiff::parse("(dz2)", sq.clone()).unwrap()), 8, 10.0, TraceOptions::default()).unwrap();
        assert!((s.boundary_mass - 2.0).abs() < 1e-12);
        let lam = DiscreteLamination::from_samples(&s.leaves, &sq, 1e-7).unwrap();
        assert_eq!(lam.leaves.len(), 4);
        assert!(lam.leaves.iter().all(|l| (l.w - 0.25).abs() < 1e-12));
        assert!((lam.total_weight() - 1.0).abs() < 1e-12);
        assert!(DiscreteLamination::from_samples(&[], &sq, 1e-7).unwrap().leaves.is_empty());
    }

    #[test]
    fn product_foliations_intersect_in_the_area() {
        let sq = PlanarDomain::unit_square();
        let cfg = SampleConfig { samples: 64, ..Default::default() };
        let h = QuadDiff::parse("(dz2)", sq.clone()).unwrap();
        let v = QuadDiff::parse("(mul (const -1 0) (dz2))", sq).unwrap();
        let e = intersection_from_qds(&h, &v, &cfg).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12, "{e:?}");
        assert_eq!(intersection_from_qds(&h, &h, &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn strip_foliation_on_the_punctured_square() {
        let pts: Vec<[f64; 2]> = (3..=8)
            .flat_map(|n| {
                let a = 0.5 - 1.0 / n as f64;
                [[a, 0.0], [-a, 0.0]]
            })
            .collect();
        let x = PlanarDomain::rectangle(-0.5, 0.5, -0.5, 0.5).unwrap().with_punctures(pts).unwrap();
        let strip = PartialFoliation::new(x.clone(), vec![Chart::affine(Rect::new(-0.5, 0.5, 0.25, 0.5), 0.0, 1.0, 0.0)]).unwrap();
        let phi = QuadDiff::parse("(mul (const -1 0) (dz2))", x).unwrap();
        let cfg = SampleConfig { samples: 200, ..Default::default() };
        let e = intersection_between(&LeafSource::Differential(phi), &LeafSource::Foliation(strip), &cfg).unwrap();
        assert!((e.value - 0.25).abs() < 1e-12, "{e:?}");
    }

    #[test]
    fn minsky_equality_case() {
        let sq = PlanarDomain::unit_square();
        let cfg = SampleConfig { samples: 64, ..Default::default() };
        let h = LeafSource::Differential(QuadDiff::parse("(dz2)", sq.clone()).unwrap());
        let v = LeafSource::Differential(QuadDiff::parse("(mul (const -1 0) (dz2))", sq).unwrap());
        let r = minsky_verify(&h, &v, &cfg, 1e-10).unwrap();
        assert!(r.holds && r.slack.abs() < 1e-9, "{r:?}");
    }
}
