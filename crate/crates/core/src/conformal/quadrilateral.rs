//! Quadrilaterals: a domain with four marked boundary points.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::elliptic::{cross_ratio, modulus_from_cross_ratio, strip_to_circle};
use super::strip::StripMap;
use crate::domain::PlanarDomain;
use crate::error::{Error, Result};

/// Marked points are boundary coordinates in counterclockwise order. The
/// arcs `marks[0]→marks[1]` and `marks[2]→marks[3]` are the vertical sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadrilateral {
    pub domain: PlanarDomain,
    pub marks: [f64; 4],
}

/// True if `t` lies on the counterclockwise arc from `a` to `b`.
pub fn arc_contains(a: f64, b: f64, t: f64, tol: f64) -> bool {
    let len = (b - a).rem_euclid(1.0);
    let off = (t - a).rem_euclid(1.0);
    off <= len + tol || off >= 1.0 - tol
}

impl Quadrilateral {
    pub fn new(domain: PlanarDomain, marks: [f64; 4]) -> Result<Quadrilateral> {
        let m: Vec<f64> = marks.iter().map(|t| t.rem_euclid(1.0)).collect();
        let mut total = 0.0;
        for k in 0..4 {
            let gap = (m[(k + 1) % 4] - m[k]).rem_euclid(1.0);
            if gap <= 1e-12 {
                return Err(Error::InvalidDomain("marked points collide".into()));
            }
            total += gap;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDomain("marked points are not in cyclic order".into()));
        }
        Ok(Quadrilateral { domain, marks: [m[0], m[1], m[2], m[3]] })
    }

    /// Marks at polygon vertices `idx`.
    pub fn from_vertices(domain: PlanarDomain, idx: [usize; 4]) -> Result<Quadrilateral> {
        let marks = idx.map(|k| domain.vertex_coordinate(k));
        Quadrilateral::new(domain, marks)
    }

    /// Rectangle whose left and right sides are vertical.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Quadrilateral> {
        Quadrilateral::from_vertices(PlanarDomain::rectangle(x0, x1, y0, y1)?, [3, 0, 1, 2])
    }

    /// The same quadrilateral with the roles of the side pairs exchanged.
    pub fn swapped(&self) -> Quadrilateral {
        let m = self.marks;
        Quadrilateral { domain: self.domain.clone(), marks: [m[1], m[2], m[3], m[0]] }
    }

    /// 0 on the first vertical side, 1 on the second, `None` elsewhere.
    pub fn side_value(&self, t: f64, tol: f64) -> Option<f64> {
        let m = self.marks;
        if arc_contains(m[0], m[1], t, tol) {
            Some(0.0)
        } else if arc_contains(m[2], m[3], t, tol) {
            Some(1.0)
        } else {
            None
        }
    }

    pub fn mark_points(&self) -> [Complex64; 4] {
        self.marks.map(|t| self.domain.boundary_point(t))
    }

    fn mark_vertices(&self) -> Result<[usize; 4]> {
        let n = self.domain.vertices().len();
        let mut out = [0usize; 4];
        for (k, t) in self.marks.iter().enumerate() {
            out[k] = (0..n)
                .find(|&j| {
                    let d = (self.domain.vertex_coordinate(j) - t).rem_euclid(1.0);
                    !(1e-10..=1.0 - 1e-10).contains(&d)
                })
                .ok_or_else(|| Error::FamilyNotRepresentable("marked point is not a vertex".into()))?;
        }
        Ok(out)
    }

    /// Modulus (width over height of the equivalent rectangle with the
    /// vertical sides as its vertical sides) from a Schwarz-Christoffel strip
    /// map. Needs a polygon with all marks at vertices.
    pub fn modulus_sc(&self, tol: f64) -> Result<f64> {
        if self.domain.is_disk() {
            return Err(Error::FamilyNotRepresentable("the disk has no vertices".into()));
        }
        let idx = self.mark_vertices()?;
        let map = StripMap::solve(&self.domain.vertices_c(), idx[0], idx[2], tol)?;
        if !(map.residual <= 100.0 * tol) {
            return Err(Error::ParameterSolverDivergence(map.residual));
        }
        let pts = [
            strip_to_circle(Complex64::new(f64::NEG_INFINITY, 0.0)),
            strip_to_circle(map.prevertices[idx[1]]),
            strip_to_circle(Complex64::new(f64::INFINITY, 0.0)),
            strip_to_circle(map.prevertices[idx[3]]),
        ];
        Ok(modulus_from_cross_ratio(cross_ratio(pts)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_modulus_from_strip_map() {
        let q = Quadrilateral::rectangle(0.0, 2.0, 0.0, 1.0).unwrap();
        assert!((q.modulus_sc(1e-11).unwrap() - 2.0).abs() < 1e-8);
        assert!((q.swapped().modulus_sc(1e-11).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn side_values_follow_marks() {
        let q = Quadrilateral::rectangle(0.0, 2.0, 0.0, 1.0).unwrap();
        let d = &q.domain;
        assert_eq!(q.side_value(d.boundary_coordinate(Complex64::new(0.0, 0.5)), 1e-12), Some(0.0));
        assert_eq!(q.side_value(d.boundary_coordinate(Complex64::new(2.0, 0.5)), 1e-12), Some(1.0));
        assert_eq!(q.side_value(d.boundary_coordinate(Complex64::new(1.0, 0.0)), 1e-12), None);
    }

    #[test]
    fn rejects_out_of_order_marks() {
        let d = PlanarDomain::unit_square();
        assert!(Quadrilateral::new(d.clone(), [0.0, 0.5, 0.25, 0.75]).is_err());
        assert!(Quadrilateral::new(d, [0.0, 0.0, 0.25, 0.75]).is_err());
    }
}
