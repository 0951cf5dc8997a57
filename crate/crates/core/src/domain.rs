//! Planar domains: rectilinear polygons and the unit disk, with punctures and
//! optional named boundary arcs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Rect;

/// Points with `|z| >= 1 - DISK_MARGIN` are treated as outside the disk.
pub const DISK_MARGIN: f64 = 1e-12;
const PUNCTURE_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DomainKind {
    #[serde(rename = "rectilinear")]
    Rectilinear { vertices: Vec<[f64; 2]> },
    #[serde(rename = "disk")]
    UnitDisk,
}

/// A closed boundary arc `[start, end]` in normalized boundary coordinates,
/// read counterclockwise (it may wrap through 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryArc {
    pub name: String,
    pub start: f64,
    pub end: f64,
}

impl BoundaryArc {
    pub fn contains(&self, t: f64, tol: f64) -> bool {
        let len = (self.end - self.start).rem_euclid(1.0);
        let off = (t - self.start).rem_euclid(1.0);
        off <= len + tol || off >= 1.0 - tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarDomain {
    #[serde(flatten)]
    pub kind: DomainKind,
    #[serde(default)]
    pub punctures: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boundary_arcs: Vec<BoundaryArc>,
}

fn c(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

impl PlanarDomain {
    /// Builds a rectilinear polygon. Vertices are reordered counterclockwise
    /// if needed, keeping the first vertex first.
    pub fn rectilinear(vertices: Vec<[f64; 2]>, punctures: Vec<[f64; 2]>) -> Result<Self> {
        let mut vertices = vertices;
        if vertices.len() < 4 {
            return Err(Error::InvalidDomain("a rectilinear polygon needs at least 4 vertices".into()));
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let dx = (b[0] - a[0]).abs();
            let dy = (b[1] - a[1]).abs();
            if (dx > 0.0) == (dy > 0.0) {
                return Err(Error::InvalidDomain(format!("edge {i} is not axis-parallel or is degenerate")));
            }
        }
        if signed_area(&vertices) < 0.0 {
            vertices[1..].reverse();
        }
        for i in 0..n {
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (c(vertices[i]), c(vertices[(i + 1) % n]));
                let (p, q) = (c(vertices[j]), c(vertices[(j + 1) % n]));
                if segments_touch(a, b, p, q) {
                    return Err(Error::InvalidDomain(format!("edges {i} and {j} intersect")));
                }
            }
        }
        let d = PlanarDomain { kind: DomainKind::Rectilinear { vertices }, punctures: vec![], boundary_arcs: vec![] };
        d.with_punctures(punctures)
    }

    /// The axis-parallel rectangle `[x0, x1] × [y0, y1]`, with default arcs
    /// `bottom`, `right`, `top`, `left`.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        let mut d = Self::rectilinear(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]], vec![])?;
        let p = d.perimeter();
        let (w, h) = (x1 - x0, y1 - y0);
        let t = [0.0, w / p, (w + h) / p, (2.0 * w + h) / p, 1.0];
        d.boundary_arcs = ["bottom", "right", "top", "left"]
            .iter()
            .enumerate()
            .map(|(k, n)| BoundaryArc { name: n.to_string(), start: t[k], end: t[k + 1] % 1.0 })
            .collect();
        Ok(d)
    }

    pub fn unit_square() -> Self {
        Self::rectangle(0.0, 1.0, 0.0, 1.0).expect("unit square")
    }

    pub fn unit_disk() -> Self {
        PlanarDomain { kind: DomainKind::UnitDisk, punctures: vec![], boundary_arcs: vec![] }
    }

    /// `[0,1]² ∪ [0,w]×[1,h]`: the unit square with a vertical arm on its
    /// top-left corner.
    pub fn square_with_arm(w: f64, h: f64) -> Result<Self> {
        Self::rectilinear(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [w, 1.0], [w, h], [0.0, h]], vec![])
    }

    pub fn with_punctures(mut self, punctures: Vec<[f64; 2]>) -> Result<Self> {
        for p in &punctures {
            let z = c(*p);
            if !self.contains_ignoring_punctures(z) || self.distance_to_boundary(z) <= 0.0 {
                return Err(Error::InvalidDomain(format!("puncture {z} is not strictly inside")));
            }
        }
        self.punctures = punctures;
        Ok(self)
    }

    pub fn with_arcs(mut self, arcs: Vec<BoundaryArc>) -> Self {
        self.boundary_arcs = arcs;
        self
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        match &self.kind {
            DomainKind::Rectilinear { vertices } => vertices,
            DomainKind::UnitDisk => &[],
        }
    }

    pub fn vertices_c(&self) -> Vec<Complex64> {
        self.vertices().iter().map(|v| c(*v)).collect()
    }

    pub fn puncture_points(&self) -> Vec<Complex64> {
        self.punctures.iter().map(|p| c(*p)).collect()
    }

    pub fn is_disk(&self) -> bool {
        matches!(self.kind, DomainKind::UnitDisk)
    }

    pub fn same_shape(&self, other: &PlanarDomain) -> bool {
        self.kind == other.kind && self.punctures == other.punctures
    }

    pub fn area(&self) -> f64 {
        match &self.kind {
            DomainKind::Rectilinear { vertices } => signed_area(vertices).abs(),
            DomainKind::UnitDisk => std::f64::consts::PI,
        }
    }

    pub fn bbox(&self) -> Rect {
        match &self.kind {
            DomainKind::Rectilinear { vertices } => {
                let xs = vertices.iter().map(|v| v[0]);
                let ys = vertices.iter().map(|v| v[1]);
                Rect::new(
                    xs.clone().fold(f64::INFINITY, f64::min),
                    xs.fold(f64::NEG_INFINITY, f64::max),
                    ys.clone().fold(f64::INFINITY, f64::min),
                    ys.fold(f64::NEG_INFINITY, f64::max),
                )
            }
            DomainKind::UnitDisk => Rect::new(-1.0, 1.0, -1.0, 1.0),
        }
    }

    /// Open-domain membership, ignoring punctures.
    pub fn contains_ignoring_punctures(&self, z: Complex64) -> bool {
        match &self.kind {
            DomainKind::UnitDisk => z.norm() < 1.0 - DISK_MARGIN,
            DomainKind::Rectilinear { vertices } => {
                point_in_polygon(vertices, z) && self.distance_to_boundary(z) > 0.0
            }
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.contains_ignoring_punctures(z) && !self.is_puncture(z)
    }

    /// Closed-domain membership with tolerance.
    pub fn contains_closed(&self, z: Complex64, tol: f64) -> bool {
        match &self.kind {
            DomainKind::UnitDisk => z.norm() <= 1.0 + tol,
            DomainKind::Rectilinear { vertices } => {
                point_in_polygon(vertices, z) || self.distance_to_boundary(z) <= tol
            }
        }
    }

    pub fn is_puncture(&self, z: Complex64) -> bool {
        self.punctures.iter().any(|p| (c(*p) - z).norm() < PUNCTURE_EPS)
    }

    pub fn edges(&self) -> Vec<(Complex64, Complex64)> {
        let v = self.vertices_c();
        (0..v.len()).map(|i| (v[i], v[(i + 1) % v.len()])).collect()
    }

    pub fn perimeter(&self) -> f64 {
        match &self.kind {
            DomainKind::UnitDisk => 2.0 * std::f64::consts::PI,
            DomainKind::Rectilinear { .. } => self.edges().iter().map(|(a, b)| (b - a).norm()).sum(),
        }
    }

    pub fn distance_to_boundary(&self, z: Complex64) -> f64 {
        match &self.kind {
            DomainKind::UnitDisk => (1.0 - z.norm()).abs(),
            DomainKind::Rectilinear { .. } => self
                .edges()
                .iter()
                .map(|(a, b)| point_segment_distance(z, *a, *b))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Normalized counterclockwise boundary coordinate in `[0, 1)` of the
    /// boundary point nearest to `z`.
    pub fn boundary_coordinate(&self, z: Complex64) -> f64 {
        match &self.kind {
            DomainKind::UnitDisk => (z.arg() / (2.0 * std::f64::consts::PI)).rem_euclid(1.0),
            DomainKind::Rectilinear { .. } => {
                let per = self.perimeter();
                let mut acc = 0.0;
                let mut best = (f64::INFINITY, 0.0);
                for (a, b) in self.edges() {
                    let len = (b - a).norm();
                    let t = (((z - a) * (b - a).conj()).re / (len * len)).clamp(0.0, 1.0);
                    let d = (a + (b - a) * t - z).norm();
                    if d < best.0 {
                        best = (d, acc + t * len);
                    }
                    acc += len;
                }
                (best.1 / per).rem_euclid(1.0)
            }
        }
    }

    /// Boundary point at normalized coordinate `t`.
    pub fn boundary_point(&self, t: f64) -> Complex64 {
        let t = t.rem_euclid(1.0);
        match &self.kind {
            DomainKind::UnitDisk => Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * t),
            DomainKind::Rectilinear { .. } => {
                let mut s = t * self.perimeter();
                let edges = self.edges();
                for (a, b) in &edges {
                    let len = (b - a).norm();
                    if s <= len {
                        return a + (b - a) * (s / len);
                    }
                    s -= len;
                }
                edges[0].0
            }
        }
    }

    /// Boundary coordinate of vertex `k`.
    pub fn vertex_coordinate(&self, k: usize) -> f64 {
        let per = self.perimeter();
        let acc: f64 = self.edges().iter().take(k).map(|(a, b)| (b - a).norm()).sum();
        acc / per
    }

    pub fn arc(&self, name: &str) -> Option<&BoundaryArc> {
        self.boundary_arcs.iter().find(|a| a.name == name)
    }

    /// First crossing of the segment `[a, b]` with the boundary, as
    /// `(fraction along the segment, point)`.
    pub fn segment_exit(&self, a: Complex64, b: Complex64) -> Option<(f64, Complex64)> {
        match &self.kind {
            DomainKind::UnitDisk => {
                let r = 1.0 - DISK_MARGIN;
                let d = b - a;
                let qa = d.norm_sqr();
                let qb = 2.0 * (a.conj() * d).re;
                let qc = a.norm_sqr() - r * r;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 || qa == 0.0 {
                    return None;
                }
                let t = (-qb + disc.sqrt()) / (2.0 * qa);
                (0.0..=1.0).contains(&t).then(|| (t, a + d * t))
            }
            DomainKind::Rectilinear { .. } => {
                let mut best: Option<(f64, Complex64)> = None;
                for (p, q) in self.edges() {
                    if let Some((t, _)) = segment_intersection(a, b, p, q) {
                        if best.is_none_or(|bt| t < bt.0) {
                            best = Some((t, a + (b - a) * t));
                        }
                    }
                }
                best
            }
        }
    }

    /// Rectangles tiling the polygon (or the bounding square of the disk).
    pub fn rectangles(&self) -> Vec<Rect> {
        match &self.kind {
            DomainKind::UnitDisk => vec![self.bbox()],
            DomainKind::Rectilinear { vertices } => {
                let mut xs: Vec<f64> = vertices.iter().map(|v| v[0]).collect();
                let mut ys: Vec<f64> = vertices.iter().map(|v| v[1]).collect();
                xs.sort_by(f64::total_cmp);
                xs.dedup();
                ys.sort_by(f64::total_cmp);
                ys.dedup();
                let mut out = Vec::new();
                for j in 0..ys.len() - 1 {
                    for i in 0..xs.len() - 1 {
                        let cx = 0.5 * (xs[i] + xs[i + 1]);
                        let cy = 0.5 * (ys[j] + ys[j + 1]);
                        if point_in_polygon(vertices, Complex64::new(cx, cy)) {
                            out.push(Rect::new(xs[i], xs[i + 1], ys[j], ys[j + 1]));
                        }
                    }
                }
                out
            }
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: PlanarDomain = serde_json::from_str(s)?;
        match raw.kind {
            DomainKind::Rectilinear { vertices } => Ok(Self::rectilinear(vertices, raw.punctures)?.with_arcs(raw.boundary_arcs)),
            DomainKind::UnitDisk => Ok(Self::unit_disk().with_punctures(raw.punctures)?.with_arcs(raw.boundary_arcs)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("domain serializes")
    }
}

pub fn signed_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i][0] * v[(i + 1) % n][1] - v[(i + 1) % n][0] * v[i][1]).sum::<f64>()
}

pub fn point_in_polygon(v: &[[f64; 2]], z: Complex64) -> bool {
    let n = v.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        if (a[1] > z.im) != (b[1] > z.im) {
            let x = a[0] + (z.im - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if z.re < x {
                inside = !inside;
            }
        }
    }
    inside
}

pub fn point_segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let l2 = d.norm_sqr();
    if l2 == 0.0 {
        return (z - a).norm();
    }
    let t = (((z - a) * d.conj()).re / l2).clamp(0.0, 1.0);
    (a + d * t - z).norm()
}

fn cross(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

/// Intersection parameters `(t, u)` of segments `a + t(b-a)` and `p + u(q-p)`.
pub fn segment_intersection(a: Complex64, b: Complex64, p: Complex64, q: Complex64) -> Option<(f64, f64)> {
    let r = b - a;
    let s = q - p;
    let den = cross(r, s);
    if den.abs() < 1e-300 {
        return None;
    }
    let t = cross(p - a, s) / den;
    let u = cross(p - a, r) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some((t, u))
}

fn segments_touch(a: Complex64, b: Complex64, p: Complex64, q: Complex64) -> bool {
    if segment_intersection(a, b, p, q).is_some() {
        return true;
    }
    // collinear overlap
    point_segment_distance(p, a, b) == 0.0
        || point_segment_distance(q, a, b) == 0.0
        || point_segment_distance(a, p, q) == 0.0
        || point_segment_distance(b, p, q) == 0.0
}

/// Nested compact regions `{z : dist(z, ∂X) >= m}` for decreasing margins.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactExhaustion {
    pub margins: Vec<f64>,
}

impl CompactExhaustion {
    pub fn new(mut margins: Vec<f64>) -> Result<Self> {
        margins.sort_by(|a, b| b.total_cmp(a));
        margins.dedup();
        if margins.iter().any(|m| *m <= 0.0) {
            return Err(Error::InvalidDomain("exhaustion margins must be positive".into()));
        }
        Ok(CompactExhaustion { margins })
    }

    /// Grid sample points of region `k` at spacing `h`.
    pub fn sample_region(&self, domain: &PlanarDomain, k: usize, h: f64) -> Vec<Complex64> {
        let m = self.margins[k];
        let b = domain.bbox();
        let nx = ((b.x1 - b.x0) / h).ceil() as usize;
        let ny = ((b.y1 - b.y0) / h).ceil() as usize;
        let mut pts = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                let z = Complex64::new(b.x0 + i as f64 * h, b.y0 + j as f64 * h);
                if domain.contains(z)
                    && domain.distance_to_boundary(z) >= m - 1e-12
                    && domain.punctures.iter().all(|p| (c(*p) - z).norm() >= m)
                {
                    pts.push(z);
                }
            }
        }
        pts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_domain_area_and_tiling() {
        let d = PlanarDomain::square_with_arm(0.25, 4.0).unwrap();
        assert!((d.area() - 1.75).abs() < 1e-15);
        let tiled: f64 = d.rectangles().iter().map(|r| r.area()).sum();
        assert!((tiled - 1.75).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_rectilinear_and_self_intersecting() {
        assert!(PlanarDomain::rectilinear(vec![[0., 0.], [1., 1.], [0., 1.], [0., 0.5]], vec![]).is_err());
        let bow = vec![[0., 0.], [2., 0.], [2., 1.], [1., 1.], [1., -1.], [0., -1.]];
        assert!(PlanarDomain::rectilinear(bow, vec![]).is_err());
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let d = PlanarDomain::rectilinear(vec![[0., 0.], [0., 1.], [1., 1.], [1., 0.]], vec![]).unwrap();
        assert_eq!(d.vertices()[1], [1., 0.]);
        assert_eq!(d.vertices()[0], [0., 0.]);
    }

    #[test]
    fn punctures_must_be_interior() {
        assert!(PlanarDomain::unit_square().with_punctures(vec![[1.0, 0.5]]).is_err());
        let d = PlanarDomain::unit_square().with_punctures(vec![[0.5, 0.5]]).unwrap();
        assert!(!d.contains(Complex64::new(0.5, 0.5)));
        assert!(d.contains(Complex64::new(0.5, 0.6)));
    }

    #[test]
    fn boundary_coordinates_roundtrip() {
        let d = PlanarDomain::square_with_arm(0.5, 2.0).unwrap();
        for k in 0..50 {
            let t = k as f64 / 50.0 + 0.003;
            let z = d.boundary_point(t);
            assert!((d.boundary_coordinate(z) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn json_schema() {
        let d = PlanarDomain::from_json(r#"{"kind":"rectilinear","vertices":[[0,0],[1,0],[1,1],[0,1]],"punctures":[[0.5,0.25]]}"#).unwrap();
        assert_eq!(d.punctures.len(), 1);
        let back = PlanarDomain::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
        assert!(PlanarDomain::from_json(r#"{"kind":"disk"}"#).unwrap().is_disk());
    }

    #[test]
    fn default_rectangle_arcs() {
        let d = PlanarDomain::rectangle(0.0, 2.0, 0.0, 1.0).unwrap();
        let top = d.arc("top").unwrap();
        assert!(top.contains(d.boundary_coordinate(Complex64::new(1.0, 1.0)), 1e-12));
        assert!(!top.contains(d.boundary_coordinate(Complex64::new(1.0, 0.0)), 1e-12));
        let left = d.arc("left").unwrap();
        assert!(left.contains(d.boundary_coordinate(Complex64::new(0.0, 0.5)), 1e-12));
    }
}
