//! Extremal length: weighted curves, multicurve witnesses, and lower bounds
//! from explicit metrics.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::laplace::{annulus_core_el, modulus, quad_grid, GridMask};
use super::quadrilateral::Quadrilateral;
use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use crate::quadrature::Rect;

/// `EL(C, b) = b² EL(C)`.
pub fn el_weighted_curve(el_c: f64, b: f64) -> f64 {
    b * b * el_c
}

/// A conformal metric `ρ|dz|` sampled at the grid nodes of a quadrilateral.
#[derive(Debug, Clone)]
pub struct ConformalMetric {
    pub quad: Quadrilateral,
    pub grid_n: usize,
    pub mask: GridMask,
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveFamily {
    /// Curves joining the two vertical sides.
    JoiningSides,
    /// Curves joining the two horizontal sides.
    SeparatingSides,
}

/// Lattice steps used for shortest paths; primitive vectors up to length 4
/// in each coordinate keep the metric anisotropy below one percent.
fn steps() -> Vec<(i64, i64)> {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let mut out = Vec::new();
    for a in -4i64..=4 {
        for b in -4i64..=4 {
            if (a, b) != (0, 0) && gcd(a.abs(), b.abs()) == 1 {
                out.push((a, b));
            }
        }
    }
    out
}

impl ConformalMetric {
    pub fn from_fn<F: Fn(Complex64) -> f64>(q: &Quadrilateral, grid_n: usize, rho: F) -> Result<ConformalMetric> {
        let (mask, _) = quad_grid(q, grid_n)?;
        let rho: Vec<f64> = (0..mask.pts.len()).map(|k| rho(mask.node_point(k))).collect();
        if rho.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidDomain("metric density must be finite and nonnegative".into()));
        }
        Ok(ConformalMetric { quad: q.clone(), grid_n, mask, rho })
    }

    fn inside(&self, z: Complex64) -> bool {
        let d = &self.quad.domain;
        if d.is_disk() {
            z.norm() <= 1.0
        } else {
            d.contains_closed(z, 1e-9 * self.mask.h)
        }
    }

    /// `A_ρ = ∫ρ²` with the trapezoid rule on full grid cells.
    pub fn area(&self) -> f64 {
        let m = &self.mask;
        let mut weight = vec![0.0; m.pts.len()];
        for j in 0..m.ny as i64 {
            for i in 0..m.nx as i64 {
                let corners = [m.node(i, j), m.node(i + 1, j), m.node(i, j + 1), m.node(i + 1, j + 1)];
                if corners.iter().any(Option::is_none) {
                    continue;
                }
                let c = m.point(i as usize, j as usize) + Complex64::new(0.5, 0.5) * m.h;
                if !self.inside(c) {
                    continue;
                }
                for k in corners.into_iter().flatten() {
                    weight[k] += 0.25 * m.h * m.h;
                }
            }
        }
        weight.iter().zip(&self.rho).map(|(w, r)| w * r * r).sum()
    }

    /// Least `ρ`-length of a lattice path in the family.
    pub fn min_length(&self, family: CurveFamily) -> Result<f64> {
        let q = match family {
            CurveFamily::JoiningSides => self.quad.clone(),
            CurveFamily::SeparatingSides => self.quad.swapped(),
        };
        let (_, g) = quad_grid(&q, self.grid_n)?;
        let m = &self.mask;
        let n = m.pts.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        for k in 0..n {
            if g.fixed[k] == Some(0.0) {
                dist[k] = 0.0;
                heap.push(Reverse((0u64, k)));
            }
        }
        let steps = steps();
        while let Some(Reverse((bits, k))) = heap.pop() {
            let d = f64::from_bits(bits);
            if d > dist[k] {
                continue;
            }
            if g.fixed[k] == Some(1.0) {
                return Ok(d);
            }
            let (i, j) = m.pts[k];
            let z = m.node_point(k);
            for &(a, b) in &steps {
                let Some(t) = m.node(i as i64 + a, j as i64 + b) else { continue };
                let zt = m.node_point(t);
                let samples = 2 * a.abs().max(b.abs()) as usize;
                let mut ok = true;
                let mut acc = 0.5 * (self.rho[k] + self.rho[t]);
                for s in 1..samples {
                    let p = z + (zt - z) * (s as f64 / samples as f64);
                    if !self.inside(p) {
                        ok = false;
                        break;
                    }
                    acc += m.interpolate(&self.rho, p).unwrap_or(0.0);
                }
                if !ok {
                    continue;
                }
                let nd = d + acc / samples as f64 * (zt - z).norm();
                if nd < dist[t] {
                    dist[t] = nd;
                    heap.push(Reverse((nd.to_bits(), t)));
                }
            }
        }
        Err(Error::FamilyNotRepresentable("no lattice path joins the sides".into()))
    }
}

/// `ℓ_ρ(C)² / A_ρ` for the family on the metric's grid.
pub fn el_lower_bound(rho: &ConformalMetric, family: CurveFamily) -> Result<f64> {
    let area = rho.area();
    if !(area > 0.0) {
        return Err(Error::InvalidDomain("metric has zero area".into()));
    }
    let l = rho.min_length(family)?;
    Ok(l * l / area)
}

/// A region carrying a family of core curves: a quadrilateral with its
/// vertical sides glued (core curves join them), or a round annulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ElRegion {
    Quadrilateral(Quadrilateral),
    Annulus { center: [f64; 2], inner: f64, outer: f64 },
}

impl ElRegion {
    pub fn el(&self, grid_n: usize) -> Result<f64> {
        match self {
            ElRegion::Quadrilateral(q) => Ok(modulus(q, grid_n)?.value),
            ElRegion::Annulus { inner, outer, .. } => Ok(annulus_core_el(inner / outer, grid_n)?.value),
        }
    }

    fn tiles(&self) -> Option<Vec<Rect>> {
        match self {
            ElRegion::Quadrilateral(q) if !q.domain.is_disk() => Some(q.domain.rectangles()),
            _ => None,
        }
    }

    /// Center and radii of a round region.
    fn round(&self) -> (Complex64, f64, f64) {
        match self {
            ElRegion::Annulus { center, inner, outer } => (Complex64::new(center[0], center[1]), *inner, *outer),
            ElRegion::Quadrilateral(_) => (Complex64::new(0.0, 0.0), 0.0, 1.0),
        }
    }
}

fn rect_meets_ring(r: &Rect, c: Complex64, inner: f64, outer: f64) -> bool {
    let near = Complex64::new(c.re.clamp(r.x0, r.x1), c.im.clamp(r.y0, r.y1));
    let min = (near - c).norm();
    let max = [(r.x0, r.y0), (r.x1, r.y0), (r.x0, r.y1), (r.x1, r.y1)]
        .iter()
        .map(|&(x, y)| (Complex64::new(x, y) - c).norm())
        .fold(0.0, f64::max);
    let tol = 1e-12;
    min < outer - tol && max > inner + tol
}

fn overlap(a: &ElRegion, b: &ElRegion) -> bool {
    let tol = 1e-12;
    match (a.tiles(), b.tiles()) {
        (Some(ta), Some(tb)) => ta.iter().any(|x| {
            tb.iter().any(|y| x.x0.max(y.x0) < x.x1.min(y.x1) - tol && x.y0.max(y.y0) < x.y1.min(y.y1) - tol)
        }),
        (Some(t), None) | (None, Some(t)) => {
            let round = if a.tiles().is_none() { a } else { b };
            let (c, r, big) = round.round();
            t.iter().any(|x| rect_meets_ring(x, c, r, big))
        }
        (None, None) => {
            let (c1, r1, s1) = a.round();
            let (c2, r2, s2) = b.round();
            let d = (c1 - c2).norm();
            let apart = d >= s1 + s2 - tol;
            let nested = d + s2 <= r1 + tol || d + s1 <= r2 + tol;
            !(apart || nested)
        }
    }
}

/// `Σ b_n² EL(R_n)` for the given family of disjoint regions; an upper
/// bound for the extremal length of the weighted multicurve.
pub fn el_multicurve(regions: &[(ElRegion, f64)], grid_n: usize) -> Result<f64> {
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            if overlap(&regions[i].0, &regions[j].0) {
                return Err(Error::RegionsOverlap);
            }
        }
    }
    let mut total = 0.0;
    for (r, b) in regions {
        total += el_weighted_curve(r.el(grid_n)?, *b);
    }
    Ok(total)
}

/// Annular region as a quadrilateral-free convenience.
pub fn annulus(center: [f64; 2], inner: f64, outer: f64) -> ElRegion {
    ElRegion::Annulus { center, inner, outer }
}

pub fn quad_region(domain: PlanarDomain, marks: [f64; 4]) -> Result<ElRegion> {
    Ok(ElRegion::Quadrilateral(Quadrilateral::new(domain, marks)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::laplace::rectangle_uniformize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn weighted_curve_examples() {
        assert_eq!(el_weighted_curve(5.0, 2.0), 20.0);
        assert_eq!(el_weighted_curve(0.7, 1.0), 0.7);
        let el = annulus_core_el((-PI).exp(), 256).unwrap().value;
        assert!((el_weighted_curve(el, 3.0) - 18.0).abs() < 1e-3);
    }

    #[test]
    fn flat_metric_is_extremal_on_rectangles() {
        let q = Quadrilateral::rectangle(0.0, 2.0, 0.0, 1.0).unwrap();
        let rho = ConformalMetric::from_fn(&q, 16, |_| 1.0).unwrap();
        assert!((el_lower_bound(&rho, CurveFamily::JoiningSides).unwrap() - 2.0).abs() < 1e-12);
        assert!((el_lower_bound(&rho, CurveFamily::SeparatingSides).unwrap() - 0.5).abs() < 1e-12);
        let sq = Quadrilateral::rectangle(0.0, 1.0, 0.0, 1.0).unwrap();
        let rho = ConformalMetric::from_fn(&sq, 16, |_| 1.0).unwrap();
        assert!((el_lower_bound(&rho, CurveFamily::JoiningSides).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_metrics_stay_below_extremal_length() {
        let q = Quadrilateral::rectangle(0.0, 2.0, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let (a, b, c) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.0..6.0));
            let rho = ConformalMetric::from_fn(&q, 16, |z| 1.2 + (a * z.re + b * z.im + c).sin()).unwrap();
            let v = el_lower_bound(&rho, CurveFamily::JoiningSides).unwrap();
            assert!(v <= 2.0 + 1e-2, "{v}");
        }
    }

    #[test]
    fn uniformizer_derivative_approaches_extremal_length() {
        // |f'| is singular like r^{-1/3} at the reentrant corner, so the gap
        // closes slowly under refinement.
        let d = PlanarDomain::square_with_arm(0.5, 2.0).unwrap();
        let q = Quadrilateral::from_vertices(d, [5, 0, 2, 4]).unwrap();
        let gap = |n: usize| {
            let f = rectangle_uniformize(&q, n).unwrap();
            let rho = ConformalMetric::from_fn(&q, n, |z| f.derivative(z).map_or(0.0, |d| d.norm())).unwrap();
            let lb = el_lower_bound(&rho, CurveFamily::JoiningSides).unwrap();
            (f.modulus.value - lb) / f.modulus.value
        };
        let (g32, g64) = (gap(32), gap(64));
        assert!(g64 > -1e-2 && g64 < 0.07 && g64 < 0.8 * g32, "{g32} {g64}");
    }

    #[test]
    fn multicurve_sums_and_rejects_overlap() {
        assert_eq!(el_multicurve(&[], 64).unwrap(), 0.0);
        let a = annulus([0.0, 0.0], 0.1, 0.5);
        let b = annulus([3.0, 0.0], 0.2, 1.0);
        let ea = a.el(256).unwrap();
        let eb = b.el(256).unwrap();
        assert!((ea - 2.0 * PI / 5f64.ln()).abs() < 1e-3);
        let total = el_multicurve(&[(a.clone(), 1.0), (b.clone(), 2.0)], 256).unwrap();
        assert!((total - (ea + 4.0 * eb)).abs() < 1e-12);
        let c = annulus([0.2, 0.0], 0.1, 0.5);
        assert_eq!(el_multicurve(&[(a.clone(), 1.0), (c, 1.0)], 64), Err(Error::RegionsOverlap));
        let nested = annulus([0.0, 0.0], 0.01, 0.05);
        assert!(el_multicurve(&[(a.clone(), 1.0), (nested, 1.0)], 64).is_ok());
        let q = ElRegion::Quadrilateral(Quadrilateral::rectangle(0.0, 2.0, 0.0, 1.0).unwrap());
        assert_eq!(el_multicurve(&[(a, 1.0), (q.clone(), 1.0)], 64), Err(Error::RegionsOverlap));
        let r = ElRegion::Quadrilateral(Quadrilateral::rectangle(5.0, 6.0, 0.0, 1.0).unwrap());
        assert!((el_multicurve(&[(q, 1.0), (r, 3.0)], 64).unwrap() - 11.0).abs() < 1e-9);
    }
}
