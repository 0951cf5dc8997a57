//! Two crossing quadrilaterals with their vertical sides on the boundary of an
//! ambient domain. Each carries the horizontal lamination pulled back from its
//! rectangle model; when every leaf of one crosses every leaf of the other the
//! intersection number is the product of the rectangle heights.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::laplace::{modulus, solve_on_grid, GridPotential};
use super::quadrilateral::Quadrilateral;
use crate::domain::{segment_intersection, PlanarDomain};
use crate::error::{Error, Result};
use crate::lamination::{intersection_number, DiscreteLamination, Leaf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Heights {
    /// Height from the primal potential, `√(A/M)`.
    pub primal: f64,
    /// Height from the side-swapped potential, `√(A·M*)`.
    pub dual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossingReport {
    pub grid_n: usize,
    pub samples: usize,
    pub v1: f64,
    pub v2: f64,
    pub v1_dual: f64,
    pub v2_dual: f64,
    pub i: f64,
    pub product: f64,
    pub gap: f64,
    pub boundary_crossings: usize,
    pub crossing_pairs: usize,
    pub v1_refined: f64,
    pub v2_refined: f64,
    pub stability: f64,
    pub stable: bool,
}

/// Primal and dual rectangle heights with area normalization.
pub fn heights(q: &Quadrilateral, grid_n: usize) -> Result<Heights> {
    let a = q.domain.area();
    let m = modulus(q, grid_n)?.value;
    let m_star = modulus(&q.swapped(), grid_n)?.value;
    Ok(Heights { primal: (a / m).sqrt(), dual: (a * m_star).sqrt() })
}

/// Points where the two boundaries cross, deduplicated.
pub fn boundary_crossings(j1: &PlanarDomain, j2: &PlanarDomain) -> Vec<Complex64> {
    let mut pts: Vec<Complex64> = Vec::new();
    for (a, b) in j1.edges() {
        for (p, q) in j2.edges() {
            if let Some((t, _)) = segment_intersection(a, b, p, q) {
                let z = a + (b - a) * t;
                if pts.iter().all(|w| (w - z).norm() > 1e-12) {
                    pts.push(z);
                }
            }
        }
    }
    pts
}

fn check_placement(q: &Quadrilateral, ambient: &PlanarDomain, name: &str) -> Result<()> {
    if q.domain.is_disk() {
        return Err(Error::ConfigurationInvalid(format!("{name} must be a polygon")));
    }
    let tol = 1e-9 * ambient.bbox().diameter();
    if q.domain.vertices_c().iter().any(|&z| !ambient.contains_closed(z, tol)) {
        return Err(Error::ConfigurationInvalid(format!("{name} is not inside the ambient domain")));
    }
    let m = q.marks;
    for (s, e) in [(m[0], m[1]), (m[2], m[3])] {
        let len = (e - s).rem_euclid(1.0);
        for k in 0..=16 {
            let z = q.domain.boundary_point(s + len * k as f64 / 16.0);
            if ambient.distance_to_boundary(z) > tol {
                return Err(Error::ConfigurationInvalid(format!("a vertical side of {name} leaves the ambient boundary")));
            }
        }
    }
    Ok(())
}

/// Boundary coordinate on the arc `s → e` of `q` where the dual potential
/// takes the value `level`.
fn level_point(q: &Quadrilateral, dual: &GridPotential, s: f64, e: f64, level: f64) -> Result<Complex64> {
    let len = (e - s).rem_euclid(1.0);
    let at = |f: f64| -> Result<f64> {
        let z = q.domain.boundary_point(s + len * f);
        dual.eval(z).map(|u| u - level).ok_or_else(|| Error::GridDegenerate(format!("no grid value near {z}")))
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let (flo, fhi) = (at(lo)?, at(hi)?);
    if flo * fhi > 0.0 {
        return Err(Error::GridDegenerate("dual potential does not bracket the level on a vertical side".into()));
    }
    let rising = fhi > flo;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (at(mid)? > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(q.domain.boundary_point(s + len * 0.5 * (lo + hi)))
}

/// Lamination of `samples` leaves of the pulled-back horizontal foliation,
/// each joining the two points of the vertical sides at one dual level.
pub fn horizontal_lamination(q: &Quadrilateral, ambient: &PlanarDomain, grid_n: usize, samples: usize, v_dual: f64) -> Result<DiscreteLamination> {
    let dual = solve_on_grid(&q.swapped(), grid_n)?;
    let m = q.marks;
    let w = v_dual / samples as f64;
    let mut leaves = Vec::with_capacity(samples);
    for k in 0..samples {
        let level = (k as f64 + 0.5) / samples as f64;
        let p1 = level_point(q, &dual, m[0], m[1], level)?;
        let p2 = level_point(q, &dual, m[2], m[3], level)?;
        leaves.push(Leaf::new(ambient.boundary_coordinate(p1), ambient.boundary_coordinate(p2), w));
    }
    DiscreteLamination::new(leaves, ambient.clone())
}

/// Intersection number of the two pulled-back laminations against the
/// product of the heights, with a grid-doubling stability check.
pub fn thm62_experiment(j1: &Quadrilateral, j2: &Quadrilateral, ambient: &PlanarDomain, grid_n: usize, samples: usize) -> Result<CrossingReport> {
    check_placement(j1, ambient, "J1")?;
    check_placement(j2, ambient, "J2")?;
    let crossings = boundary_crossings(&j1.domain, &j2.domain).len();
    if crossings != 4 {
        return Err(Error::ConfigurationInvalid(format!("boundaries cross in {crossings} points, expected 4")));
    }
    let h1 = heights(j1, grid_n)?;
    let h2 = heights(j2, grid_n)?;
    let r1 = heights(j1, 2 * grid_n)?;
    let r2 = heights(j2, 2 * grid_n)?;
    let mu = horizontal_lamination(j1, ambient, grid_n, samples, h1.dual)?;
    let nu = horizontal_lamination(j2, ambient, grid_n, samples, h2.dual)?;
    let i = intersection_number(&mu, &nu)?;
    let pairs = mu.leaves.iter().map(|a| nu.leaves.iter().filter(|b| crate::lamination::crosses(a.pair(), b.pair())).count()).sum();
    let product = h1.primal * h2.primal;
    let stability = (r1.primal - h1.primal).abs().max((r2.primal - h2.primal).abs());
    Ok(CrossingReport {
        grid_n,
        samples,
        v1: h1.primal,
        v2: h2.primal,
        v1_dual: h1.dual,
        v2_dual: h2.dual,
        i,
        product,
        gap: (i - product).abs(),
        boundary_crossings: crossings,
        crossing_pairs: pairs,
        v1_refined: r1.primal,
        v2_refined: r2.primal,
        stability,
        stable: stability <= 1e-3,
    })
}

/// The band `[0,1]×[0.25,0.5]` and a staircase from the bottom to the top of
/// the unit square whose step lies inside the band. Vertices sit on the
/// lattices of every grid size divisible by 32.
pub fn square_model() -> Result<(Quadrilateral, Quadrilateral, PlanarDomain)> {
    let j1 = Quadrilateral::rectangle(0.0, 1.0, 0.25, 0.5)?;
    let stair = PlanarDomain::rectilinear(
        vec![[0.25, 0.0], [0.5, 0.0], [0.5, 0.375], [0.75, 0.375], [0.75, 1.0], [0.375, 1.0], [0.375, 0.375], [0.25, 0.375]],
        vec![],
    )?;
    let j2 = Quadrilateral::from_vertices(stair, [0, 1, 4, 5])?;
    Ok((j1, j2, PlanarDomain::unit_square()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_rectangles_give_product_of_heights() {
        let j1 = Quadrilateral::rectangle(0.0, 1.0, 0.5, 0.75).unwrap();
        let band = PlanarDomain::rectangle(0.3, 1.0 / 3.0 + 0.3, 0.0, 1.0).unwrap();
        let j2 = Quadrilateral::from_vertices(band, [0, 1, 2, 3]).unwrap();
        let r = thm62_experiment(&j1, &j2, &PlanarDomain::unit_square(), 16, 24).unwrap();
        assert!((r.v1 - 0.25).abs() < 1e-9 && (r.v2 - 1.0 / 3.0).abs() < 1e-9, "{r:?}");
        assert!((r.i - 1.0 / 12.0).abs() < 1e-9, "{r:?}");
        assert_eq!(r.crossing_pairs, 24 * 24);
        assert!(r.stable);
    }

    #[test]
    fn disjoint_quadrilaterals_are_rejected() {
        let j1 = Quadrilateral::rectangle(0.0, 1.0, 0.0, 0.2).unwrap();
        let j2 = Quadrilateral::rectangle(0.0, 1.0, 0.5, 0.7).unwrap();
        let e = thm62_experiment(&j1, &j2, &PlanarDomain::unit_square(), 16, 8).unwrap_err();
        assert!(matches!(e, Error::ConfigurationInvalid(_)));
        let mu = horizontal_lamination(&j1, &PlanarDomain::unit_square(), 16, 8, 0.2).unwrap();
        let nu = horizontal_lamination(&j2, &PlanarDomain::unit_square(), 16, 8, 0.2).unwrap();
        assert_eq!(intersection_number(&mu, &nu).unwrap(), 0.0);
    }

    #[test]
    fn interior_sides_are_rejected() {
        let j1 = Quadrilateral::rectangle(0.125, 1.0, 0.25, 0.5).unwrap();
        let (_, j2, amb) = square_model().unwrap();
        assert!(matches!(thm62_experiment(&j1, &j2, &amb, 16, 8), Err(Error::ConfigurationInvalid(_))));
    }

    #[test]
    fn staircase_model_matches_height_product() {
        let (j1, j2, amb) = square_model().unwrap();
        let r = thm62_experiment(&j1, &j2, &amb, 32, 40).unwrap();
        assert_eq!(r.boundary_crossings, 4);
        assert_eq!(r.crossing_pairs, 1600);
        assert!(r.gap < 1e-4 && r.stable, "{r:?}");
        assert!(r.v2 > 0.28 && r.v2 < 0.3, "{r:?}");
    }
}
