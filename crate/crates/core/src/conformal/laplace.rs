//! Finite-difference Laplace solver for quadrilateral moduli.
//!
//! The domain is masked onto a uniform grid. Nodes on the two vertical
//! sides carry Dirichlet values 0 and 1; every other node is free, which
//! makes the remaining boundary insulating (the graph Laplacian has no edge
//! leaving the domain). Edges running along a polygon side get weight ½, so
//! on rectangles the discrete potential is exactly linear. The Dirichlet
//! energy is `Σ w_e (u_a − u_b)²`; the modulus is its reciprocal.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::quadrilateral::Quadrilateral;
use crate::error::{Error, Result};

/// Relative residual at which conjugate gradients stop.
pub const CG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Default)]
pub struct WeightedGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub fixed: Vec<Option<f64>>,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        WeightedGraph { n, edges: Vec::new(), fixed: vec![None; n] }
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        self.edges.iter().map(|&(a, b, w)| w * (u[a] - u[b]).powi(2)).sum()
    }

    /// Harmonic extension of the fixed values by Jacobi-preconditioned
    /// conjugate gradients.
    pub fn solve(&self) -> Vec<f64> {
        let mut free_id = vec![usize::MAX; self.n];
        let mut free = Vec::new();
        for i in 0..self.n {
            if self.fixed[i].is_none() {
                free_id[i] = free.len();
                free.push(i);
            }
        }
        let m = free.len();
        let mut diag = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for &(a, b, w) in &self.edges {
            for (p, q) in [(a, b), (b, a)] {
                if free_id[p] == usize::MAX {
                    continue;
                }
                let i = free_id[p];
                diag[i] += w;
                match self.fixed[q] {
                    Some(v) => rhs[i] += w * v,
                    None => adj[i].push((free_id[q], w)),
                }
            }
        }
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..m {
                let mut s = diag[i] * x[i];
                for &(j, w) in &adj[i] {
                    s -= w * x[j];
                }
                out[i] = s;
            }
        };
        let pre: Vec<f64> = diag.iter().map(|d| if *d > 0.0 { 1.0 / d } else { 0.0 }).collect();
        let mut x = vec![0.0; m];
        let mut r = rhs.clone();
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm > 0.0 {
            let mut z: Vec<f64> = r.iter().zip(&pre).map(|(a, b)| a * b).collect();
            let mut p = z.clone();
            let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let mut ap = vec![0.0; m];
            for _ in 0..20 * m.max(10) {
                apply(&p, &mut ap);
                let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
                if pap <= 0.0 {
                    break;
                }
                let alpha = rz / pap;
                for i in 0..m {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * ap[i];
                }
                let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                if rn <= CG_TOL * bnorm {
                    break;
                }
                for i in 0..m {
                    z[i] = r[i] * pre[i];
                }
                let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..m {
                    p[i] = z[i] + beta * p[i];
                }
            }
        }
        let mut u = vec![0.0; self.n];
        for i in 0..self.n {
            u[i] = match self.fixed[i] {
                Some(v) => v,
                None => x[free_id[i]],
            };
        }
        u
    }
}

/// Grid points of a domain on a uniform lattice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMask {
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    /// Node id of grid point `(i, j)` at `j * (nx + 1) + i`; `usize::MAX` when
    /// outside the domain.
    pub id: Vec<usize>,
    /// Lattice position of each node.
    pub pts: Vec<(usize, usize)>,
}

impl GridMask {
    pub fn node(&self, i: i64, j: i64) -> Option<usize> {
        if i < 0 || j < 0 || i > self.nx as i64 || j > self.ny as i64 {
            return None;
        }
        let k = self.id[j as usize * (self.nx + 1) + i as usize];
        (k != usize::MAX).then_some(k)
    }

    pub fn point(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h)
    }

    pub fn node_point(&self, k: usize) -> Complex64 {
        let (i, j) = self.pts[k];
        self.point(i, j)
    }

    /// Bilinear interpolation of nodal values, renormalized over the corners
    /// inside the domain.
    pub fn interpolate(&self, values: &[f64], z: Complex64) -> Option<f64> {
        let fx = (z.re - self.x0) / self.h;
        let fy = (z.im - self.y0) / self.h;
        let i = (fx.floor() as i64).clamp(0, self.nx.max(1) as i64 - 1);
        let j = (fy.floor() as i64).clamp(0, self.ny.max(1) as i64 - 1);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (di, dj, w) in [(0, 0, (1.0 - tx) * (1.0 - ty)), (1, 0, tx * (1.0 - ty)), (0, 1, (1.0 - tx) * ty), (1, 1, tx * ty)] {
            if let Some(k) = self.node(i + di, j + dj) {
                acc += w * values[k];
                wsum += w;
            }
        }
        if wsum > 1e-12 {
            return Some(acc / wsum);
        }
        let (ci, cj) = (fx.round() as i64, fy.round() as i64);
        let mut best: Option<(f64, usize)> = None;
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(k) = self.node(ci + di, cj + dj) {
                    let d = (self.node_point(k) - z).norm();
                    if best.is_none_or(|b| d < b.0) {
                        best = Some((d, k));
                    }
                }
            }
        }
        best.map(|(_, k)| values[k])
    }
}

/// A potential on the masked grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPotential {
    pub mask: GridMask,
    pub u: Vec<f64>,
    pub energy: f64,
}

impl GridPotential {
    pub fn h(&self) -> f64 {
        self.mask.h
    }

    pub fn eval(&self, z: Complex64) -> Option<f64> {
        self.mask.interpolate(&self.u, z)
    }
}

/// Lattice of `q` with spacing `min(width, height)/grid_n`, its weighted
/// five-point graph, and Dirichlet values 0/1 on the vertical sides.
pub fn quad_grid(q: &Quadrilateral, grid_n: usize) -> Result<(GridMask, WeightedGraph)> {
    let d = &q.domain;
    let bb = d.bbox();
    let (wid, hei) = (bb.x1 - bb.x0, bb.y1 - bb.y0);
    let h = wid.min(hei) / grid_n as f64;
    let nx = (wid / h).round() as usize;
    let ny = (hei / h).round() as usize;
    let tb = 1e-9 * h;
    let marks = q.mark_points();
    for a in 0..4 {
        for b in a + 1..4 {
            if (marks[a] - marks[b]).norm() < 2.0 * h {
                return Err(Error::GridDegenerate(format!("marked points {a} and {b} are within two grid steps")));
            }
        }
    }
    let pt = |i: usize, j: usize| Complex64::new(bb.x0 + i as f64 * h, bb.y0 + j as f64 * h);
    let disk = d.is_disk();
    let mut id = vec![usize::MAX; (nx + 1) * (ny + 1)];
    let mut pts = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let z = pt(i, j);
            let inside = if disk { z.norm() <= 1.0 } else { d.contains_closed(z, tb) };
            if inside {
                id[j * (nx + 1) + i] = pts.len();
                pts.push((i, j));
            }
        }
    }
    let at = |i: i64, j: i64| -> Option<usize> {
        if i < 0 || j < 0 || i > nx as i64 || j > ny as i64 {
            return None;
        }
        let k = id[j as usize * (nx + 1) + i as usize];
        (k != usize::MAX).then_some(k)
    };
    let mut g = WeightedGraph::new(pts.len());
    let (mut has0, mut has1) = (false, false);
    for (k, &(i, j)) in pts.iter().enumerate() {
        let z = pt(i, j);
        let (ii, jj) = (i as i64, j as i64);
        let on_boundary = if disk {
            [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(a, b)| at(ii + a, jj + b).is_none())
        } else {
            d.distance_to_boundary(z) <= tb
        };
        if on_boundary {
            if let Some(v) = q.side_value(d.boundary_coordinate(z), 1e-12) {
                g.fixed[k] = Some(v);
                has0 |= v == 0.0;
                has1 |= v == 1.0;
            }
        }
        for (a, b) in [(1, 0), (0, 1)] {
            if let Some(other) = at(ii + a, jj + b) {
                let m = z + Complex64::new(a as f64, b as f64) * (0.5 * h);
                let w = if disk {
                    1.0
                } else if !d.contains_closed(m, tb) {
                    continue;
                } else if d.distance_to_boundary(m) <= tb {
                    0.5
                } else {
                    1.0
                };
                g.edges.push((k, other, w));
            }
        }
    }
    if !(has0 && has1) {
        return Err(Error::GridDegenerate("a vertical side has no grid node".into()));
    }
    Ok((GridMask { x0: bb.x0, y0: bb.y0, h, nx, ny, id, pts }, g))
}

pub fn solve_on_grid(q: &Quadrilateral, grid_n: usize) -> Result<GridPotential> {
    let (mask, g) = quad_grid(q, grid_n)?;
    let u = g.solve();
    let energy = g.energy(&u);
    Ok(GridPotential { mask, u, energy })
}

/// Modulus from a single grid.
pub fn modulus_on_grid(q: &Quadrilateral, grid_n: usize) -> Result<f64> {
    Ok(1.0 / solve_on_grid(q, grid_n)?.energy)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulusEstimate {
    pub value: f64,
    pub error: f64,
    /// `(grid_n, raw value)` at the coarse, middle and fine grids.
    pub levels: Vec<(usize, f64)>,
    /// Observed convergence order; `None` when the grids agree to round-off
    /// or the differences do not shrink.
    pub order: Option<f64>,
    pub exact: bool,
}

/// Richardson extrapolation from three values on grids refined by 2.
pub fn richardson(levels: Vec<(usize, f64)>) -> ModulusEstimate {
    let (m1, m2, m3) = (levels[0].1, levels[1].1, levels[2].1);
    let (d1, d2) = (m2 - m1, m3 - m2);
    if d2.abs() <= 1e-11 * m3.abs().max(1.0) {
        return ModulusEstimate { value: m3, error: d2.abs(), levels, order: None, exact: true };
    }
    let ratio = d1 / d2;
    if ratio <= 1.0 {
        return ModulusEstimate { value: m3, error: d1.abs() + d2.abs(), levels, order: None, exact: false };
    }
    let order = ratio.log2();
    let p = order.clamp(0.5, 4.0);
    let corr = d2 / (2f64.powf(p) - 1.0);
    ModulusEstimate { value: m3 + corr, error: corr.abs(), levels, order: Some(order), exact: false }
}

/// Modulus at grids `n/4`, `n/2`, `n` with Richardson extrapolation.
pub fn modulus(q: &Quadrilateral, grid_n: usize) -> Result<ModulusEstimate> {
    let ns = [grid_n / 4, grid_n / 2, grid_n];
    if ns[0] < 2 {
        return Err(Error::GridDegenerate(format!("grid {grid_n} is too coarse for extrapolation")));
    }
    let mut levels = Vec::new();
    for n in ns {
        levels.push((n, modulus_on_grid(q, n)?));
    }
    Ok(richardson(levels))
}

/// Dirichlet energy of the potential that is 0 on `|z| = r` and 1 on
/// `|z| = 1`, on a polar grid with `n_r` radial steps (uniform in `|z|`).
/// It approximates `2π/log(1/r)`, the extremal length of the core curves.
pub fn annulus_energy_on_grid(r: f64, n_r: usize, n_theta: usize) -> f64 {
    let dr = (1.0 - r) / n_r as f64;
    let dt = 2.0 * PI / n_theta as f64;
    let idx = |i: usize, k: usize| i * n_theta + k % n_theta;
    let mut g = WeightedGraph::new((n_r + 1) * n_theta);
    for i in 0..=n_r {
        let ri = r + i as f64 * dr;
        for k in 0..n_theta {
            if i == 0 {
                g.fixed[idx(i, k)] = Some(0.0);
            } else if i == n_r {
                g.fixed[idx(i, k)] = Some(1.0);
            }
            if i < n_r {
                g.edges.push((idx(i, k), idx(i + 1, k), (ri + 0.5 * dr) * dt / dr));
            }
            let wa = if i == 0 || i == n_r { 0.5 } else { 1.0 };
            g.edges.push((idx(i, k), idx(i, k + 1), wa * dr / (ri * dt)));
        }
    }
    let u = g.solve();
    g.energy(&u)
}

pub const ANNULUS_THETA: usize = 16;

/// Core-curve extremal length `2π/log(1/r)` of `r < |z| < 1`, extrapolated.
pub fn annulus_core_el(r: f64, grid_n: usize) -> Result<ModulusEstimate> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidDomain(format!("annulus inner radius {r}")));
    }
    let ns = [grid_n / 4, grid_n / 2, grid_n];
    if ns[0] < 2 {
        return Err(Error::GridDegenerate(format!("grid {grid_n} is too coarse for extrapolation")));
    }
    Ok(richardson(ns.iter().map(|&n| (n, annulus_energy_on_grid(r, n, ANNULUS_THETA))).collect()))
}

/// Conformal map of a quadrilateral onto `[0,w]×[0,v]` built from the
/// primal potential `u` and the side-swapped potential `u*`:
/// `F = λ (u + i D u*)` with `D` the energy of `u` and `λ = √(A/D)`, so that
/// the image has the area `A` of the quadrilateral.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Uniformizer {
    pub quad: Quadrilateral,
    pub grid_n: usize,
    pub primal: GridPotential,
    pub dual: GridPotential,
    pub scale: f64,
    pub width: f64,
    pub height: f64,
    pub modulus: ModulusEstimate,
}

impl Uniformizer {
    pub fn eval(&self, z: Complex64) -> Option<Complex64> {
        let u = self.primal.eval(z)?;
        let v = self.dual.eval(z)?;
        Some(self.scale * Complex64::new(u, self.primal.energy * v))
    }

    /// Derivative from differences of the real part: centered inside,
    /// one-sided where a neighbour leaves the domain.
    pub fn derivative(&self, z: Complex64) -> Option<Complex64> {
        let e = self.primal.h();
        let d = &self.quad.domain;
        let inside = |p: Complex64| if d.is_disk() { p.norm() <= 1.0 } else { d.contains_closed(p, 1e-9 * e) };
        let diff = |dir: Complex64| -> Option<f64> {
            let (a, b) = (z + dir * e, z - dir * e);
            match (inside(a), inside(b)) {
                (true, true) => Some((self.primal.eval(a)? - self.primal.eval(b)?) / (2.0 * e)),
                (true, false) => Some((self.primal.eval(a)? - self.primal.eval(z)?) / e),
                (false, true) => Some((self.primal.eval(z)? - self.primal.eval(b)?) / e),
                (false, false) => None,
            }
        };
        let ux = diff(Complex64::new(1.0, 0.0))?;
        let uy = diff(Complex64::new(0.0, 1.0))?;
        Some(self.scale * Complex64::new(ux, -uy))
    }
}

pub fn rectangle_uniformize(q: &Quadrilateral, grid_n: usize) -> Result<Uniformizer> {
    let modulus = modulus(q, grid_n)?;
    let primal = solve_on_grid(q, grid_n)?;
    let dual = solve_on_grid(&q.swapped(), grid_n)?;
    let area = q.domain.area();
    let scale = (area / primal.energy).sqrt();
    let m = modulus.value;
    Ok(Uniformizer {
        quad: q.clone(),
        grid_n,
        primal,
        dual,
        scale,
        width: (area * m).sqrt(),
        height: (area / m).sqrt(),
        modulus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PlanarDomain;

    #[test]
    fn rectangle_is_exact() {
        let q = Quadrilateral::rectangle(0.0, 2.0, 0.0, 1.0).unwrap();
        let m = modulus(&q, 32).unwrap();
        assert!(m.exact && (m.value - 2.0).abs() < 1e-10, "{m:?}");
        let sq = Quadrilateral::rectangle(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!((modulus_on_grid(&sq, 16).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn annulus_converges_at_second_order() {
        let r = (-PI).exp();
        let m = annulus_core_el(r, 256).unwrap();
        assert!((m.value - 2.0).abs() < 1e-4, "{m:?}");
        let p = m.order.unwrap();
        assert!((p - 2.0).abs() < 0.2, "{p}");
    }

    #[test]
    fn l_shape_duality_and_sc_agreement() {
        let d = PlanarDomain::square_with_arm(0.5, 2.0).unwrap();
        let q = Quadrilateral::from_vertices(d, [5, 0, 2, 4]).unwrap();
        let a = modulus(&q, 64).unwrap();
        let b = modulus(&q.swapped(), 64).unwrap();
        let sc = q.modulus_sc(1e-11).unwrap();
        assert!((a.value - sc).abs() < 1e-3, "{a:?} vs {sc}");
        assert!((a.value * b.value - 1.0).abs() < 1e-3, "{} {}", a.value, b.value);
    }

    #[test]
    fn uniformizer_of_rectangle_is_affine() {
        let q = Quadrilateral::rectangle(0.0, 2.0, 0.0, 1.0).unwrap();
        let f = rectangle_uniformize(&q, 16).unwrap();
        assert!((f.width - 2.0).abs() < 1e-9 && (f.height - 1.0).abs() < 1e-9);
        let z = Complex64::new(0.7, 0.3);
        assert!((f.eval(z).unwrap() - z).norm() < 1e-9);
        assert!((f.derivative(z).unwrap() - 1.0).norm() < 1e-9);
    }

    #[test]
    fn disk_with_symmetric_marks_is_a_square() {
        let q = Quadrilateral::new(PlanarDomain::unit_disk(), [0.125, 0.375, 0.625, 0.875]).unwrap();
        let f = rectangle_uniformize(&q, 64).unwrap();
        assert!((f.width / f.height - 1.0).abs() < 2e-2, "{} {}", f.width, f.height);
    }
}
