//! Holomorphic quadratic differentials on planar domains: evaluation, L¹
//! norms and distances, and convergence classification on finite prefixes.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::sc::{map_by_name, SquareMap};
use crate::domain::{CompactExhaustion, PlanarDomain, DISK_MARGIN};
use crate::error::{Error, Result};
use crate::expr::{EvalPoint, Expr};
use crate::quadrature::{adaptive_2d, Quad2dOptions, Rect};

/// Maps whose parameter residual exceeds this are refused at evaluation.
pub const MAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadDiff {
    pub expr: Expr,
    pub domain: PlanarDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

fn resolve(name: &str) -> Result<Arc<SquareMap>> {
    let m = map_by_name(name)?;
    if !(m.report.residual <= MAP_TOL) {
        return Err(Error::MapNotConverged(format!("{name}: residual {:e}", m.report.residual)));
    }
    Ok(m)
}

struct Plain(Complex64);

impl EvalPoint for Plain {
    fn z(&self) -> Result<Complex64> {
        Ok(self.0)
    }
    fn pull(&self, map: &str) -> Result<(Complex64, Box<dyn EvalPoint + '_>)> {
        plain_pull(self.0, map)
    }
}

fn plain_pull(z: Complex64, map: &str) -> Result<(Complex64, Box<dyn EvalPoint>)> {
    let m = resolve(map)?;
    let (w, d) = m.eval(z)?;
    Ok((d, Box::new(Plain(w))))
}

/// A point of the square given by the polygon-strip coordinate of `map`.
struct StripSource<'a> {
    map: &'a SquareMap,
    s: Complex64,
    jac: Complex64,
}

impl EvalPoint for StripSource<'_> {
    fn z(&self) -> Result<Complex64> {
        Ok(self.map.source_point(self.s))
    }
    fn pull(&self, name: &str) -> Result<(Complex64, Box<dyn EvalPoint + '_>)> {
        if name == self.map.name {
            let d = self.map.polygon.dfds(self.s) / self.jac;
            return Ok((d, Box::new(StripTarget { map: self.map, s: self.s })));
        }
        plain_pull(self.z()?, name)
    }
}

/// `φ·(dz/ds)²` at a strip point: the differential written in the strip
/// coordinate. Computed without dividing by `dz/ds`, which underflows deep
/// inside thin arms.
fn strip_weighted(e: &Expr, p: &StripSource) -> Result<Complex64> {
    let w = p.jac * p.jac;
    Ok(match e {
        Expr::Dz2 => w,
        Expr::Add(a, b) => strip_weighted(a, p)? + strip_weighted(b, p)?,
        Expr::Sub(a, b) => strip_weighted(a, p)? - strip_weighted(b, p)?,
        Expr::Mul(a, b) if a.carries_differential() => strip_weighted(a, p)? * b.eval(p)?,
        Expr::Mul(a, b) => a.eval(p)? * strip_weighted(b, p)?,
        Expr::Div(a, b) => strip_weighted(a, p)? / b.eval(p)?,
        Expr::Pullback(name, inner) if *name == p.map.name => {
            let d = p.map.polygon.dfds(p.s);
            d * d * inner.eval(&StripTarget { map: p.map, s: p.s })?
        }
        _ => e.eval(p)? * w,
    })
}

struct StripTarget<'a> {
    map: &'a SquareMap,
    s: Complex64,
}

impl EvalPoint for StripTarget<'_> {
    fn z(&self) -> Result<Complex64> {
        Ok(self.map.polygon.eval(self.s))
    }
    fn pull(&self, name: &str) -> Result<(Complex64, Box<dyn EvalPoint + '_>)> {
        plain_pull(self.z()?, name)
    }
}

/// Value of an expression at a plain point of the plane.
pub fn eval_expr(e: &Expr, z: Complex64) -> Result<Complex64> {
    e.eval(&Plain(z))
}

impl QuadDiff {
    pub fn new(expr: Expr, domain: PlanarDomain) -> Result<QuadDiff> {
        for name in expr.map_names() {
            let m = map_by_name(&name)?;
            if !m.target.is_disk() && !domain.same_shape(&PlanarDomain::unit_square()) {
                return Err(Error::DomainMismatch);
            }
        }
        Ok(QuadDiff { expr, domain })
    }

    pub fn parse(src: &str, domain: PlanarDomain) -> Result<QuadDiff> {
        QuadDiff::new(Expr::parse(src)?, domain)
    }

    /// `c · dz²` on `domain`.
    pub fn constant(c: Complex64, domain: PlanarDomain) -> QuadDiff {
        QuadDiff { expr: Expr::scaled(c, Expr::Dz2), domain }
    }

    pub fn pullback(map: &str, inner: Expr) -> Result<QuadDiff> {
        QuadDiff::new(Expr::pullback(map, inner), PlanarDomain::unit_square())
    }

    /// Constructs and checks that the L¹ norm is finite at tolerance `tol`.
    pub fn checked(expr: Expr, domain: PlanarDomain, tol: f64) -> Result<QuadDiff> {
        let q = QuadDiff::new(expr, domain)?;
        q.l1_norm_estimate(tol)?;
        Ok(q)
    }

    pub fn constant_value(&self) -> Option<Complex64> {
        self.expr.as_constant()
    }

    pub fn scaled(&self, c: Complex64) -> QuadDiff {
        QuadDiff { expr: Expr::scaled(c, self.expr.clone()), domain: self.domain.clone() }
    }

    pub fn evaluate(&self, z: Complex64) -> Result<Complex64> {
        if self.domain.is_puncture(z) {
            return Err(Error::EvaluationAtPuncture(format!("{z}")));
        }
        if !self.domain.contains_ignoring_punctures(z) {
            return Err(Error::PointOutsideDomain(format!("{z}")));
        }
        self.expr.eval(&Plain(z))
    }

    /// Evaluation without the membership check, for integrators and tracers
    /// that already know the point is admissible.
    pub fn eval_unchecked(&self, z: Complex64) -> Result<Complex64> {
        self.expr.eval(&Plain(z))
    }

    pub fn l1_norm(&self, tol: f64) -> Result<f64> {
        Ok(self.l1_norm_estimate(tol)?.value)
    }

    pub fn l1_norm_estimate(&self, tol: f64) -> Result<Integral> {
        integrate_abs(&self.domain, &[&self.expr], |v| v[0].norm(), tol)
    }

    pub fn l1_distance(&self, other: &QuadDiff, tol: f64) -> Result<f64> {
        Ok(self.l1_distance_estimate(other, tol)?.value)
    }

    pub fn l1_distance_estimate(&self, other: &QuadDiff, tol: f64) -> Result<Integral> {
        if !self.domain.same_shape(&other.domain) {
            return Err(Error::DomainMismatch);
        }
        integrate_abs(&self.domain, &[&self.expr, &other.expr], |v| (v[0] - v[1]).norm(), tol)
    }
}

/// `∫∫ g(e₁(z), e₂(z), …) dx dy` for a nonnegative combination `g` that is
/// homogeneous of degree one in the values.
fn integrate_abs<G>(domain: &PlanarDomain, exprs: &[&Expr], g: G, tol: f64) -> Result<Integral>
where
    G: Fn(&[Complex64]) -> f64,
{
    let mut maps: Vec<String> = Vec::new();
    for e in exprs {
        for n in e.map_names() {
            if !maps.contains(&n) {
                maps.push(n);
            }
        }
    }
    let err: RefCell<Option<Error>> = RefCell::new(None);
    let record = |e: Error| {
        let mut slot = err.borrow_mut();
        if slot.is_none() {
            *slot = Some(e);
        }
        0.0
    };
    let opts = Quad2dOptions { tol, max_cells: 400_000, min_cell: 1e-9 };
    let result = if maps.len() == 1 && domain.same_shape(&PlanarDomain::unit_square()) {
        // Change of variables to the strip coordinate of the single map.
        let map = resolve(&maps[0])?;
        let f = |x: f64, y: f64| {
            let s = Complex64::new(x, y);
            let jac = map.source_jacobian(s);
            let p = StripSource { map: &map, s, jac };
            let mut vals = Vec::with_capacity(exprs.len());
            for e in exprs {
                match strip_weighted(e, &p) {
                    Ok(v) => vals.push(v),
                    Err(e) => return record(e),
                }
            }
            let v = g(&vals);
            if v.is_finite() { v } else { 0.0 }
        };
        adaptive_2d(&f, &map.strip_cells(), opts)
    } else if domain.is_disk() {
        let rmax = 1.0 - DISK_MARGIN;
        let f = |r: f64, t: f64| {
            let z = Complex64::from_polar(r, t);
            if domain.is_puncture(z) {
                return 0.0;
            }
            let mut vals = Vec::with_capacity(exprs.len());
            for e in exprs {
                match e.eval(&Plain(z)) {
                    Ok(v) => vals.push(v),
                    Err(e) => return record(e),
                }
            }
            g(&vals) * r
        };
        let cells: Vec<Rect> = (0..8)
            .map(|k| Rect::new(0.0, rmax, 2.0 * PI * k as f64 / 8.0, 2.0 * PI * (k + 1) as f64 / 8.0))
            .collect();
        adaptive_2d(&f, &cells, opts)
    } else {
        let f = |x: f64, y: f64| {
            let z = Complex64::new(x, y);
            if domain.is_puncture(z) {
                return 0.0;
            }
            let mut vals = Vec::with_capacity(exprs.len());
            for e in exprs {
                match e.eval(&Plain(z)) {
                    Ok(v) => vals.push(v),
                    Err(e) => return record(e),
                }
            }
            let v = g(&vals);
            if v.is_finite() { v } else { 0.0 }
        };
        adaptive_2d(&f, &domain.rectangles(), opts)
    };
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    if !result.converged {
        return Err(Error::QuadratureNotConverged { estimate: result.error, tol });
    }
    Ok(Integral { value: result.value, error: result.error })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `sup_errors[n][k]`: sup of `|φ_n − φ|` over exhaustion region `k`.
    pub sup_errors: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub limit_norm: f64,
    pub l1_distances: Vec<f64>,
    pub locally_uniform: bool,
    pub norm_limsup_ok: bool,
    pub l1_convergent: bool,
}

/// Verdict on a finite prefix: the values never increase by more than `tol`
/// and the last one is at most half the first (or below `tol`).
pub fn prefix_decays(values: &[f64], tol: f64) -> bool {
    if values.is_empty() {
        return true;
    }
    let monotone = values.windows(2).all(|w| w[1] <= w[0] + tol);
    let last = *values.last().expect("nonempty");
    monotone && last <= (0.5 * values[0]).max(tol)
}

/// Sample spacing used for the sup-norm tables.
pub const SUP_GRID: f64 = 0.05;

pub fn sup_error(a: &QuadDiff, b: &QuadDiff, points: &[Complex64]) -> Result<f64> {
    let errs: Vec<Result<f64>> = points
        .par_iter()
        .map(|z| Ok((a.evaluate(*z)? - b.evaluate(*z)?).norm()))
        .collect();
    let mut m: f64 = 0.0;
    for e in errs {
        m = m.max(e?);
    }
    Ok(m)
}

pub fn classify_convergence(
    seq: &[QuadDiff],
    limit: &QuadDiff,
    exhaustion: &CompactExhaustion,
    tol: f64,
) -> Result<ConvergenceReport> {
    if seq.iter().any(|q| !q.domain.same_shape(&limit.domain)) {
        return Err(Error::DomainMismatch);
    }
    let regions: Vec<Vec<Complex64>> = (0..exhaustion.margins.len())
        .map(|k| exhaustion.sample_region(&limit.domain, k, SUP_GRID))
        .collect();
    let mut sup_errors = Vec::new();
    let mut norms = Vec::new();
    let mut l1_distances = Vec::new();
    for q in seq {
        let row = regions.iter().map(|pts| sup_error(q, limit, pts)).collect::<Result<Vec<_>>>()?;
        sup_errors.push(row);
        norms.push(q.l1_norm(tol)?);
        l1_distances.push(q.l1_distance(limit, tol)?);
    }
    let limit_norm = limit.l1_norm(tol)?;
    let locally_uniform = (0..regions.len()).all(|k| {
        let col: Vec<f64> = sup_errors.iter().map(|r| r[k]).collect();
        prefix_decays(&col, tol)
    });
    let excess: Vec<f64> = norms.iter().map(|n| (n - limit_norm).max(0.0)).collect();
    let norm_limsup_ok = prefix_decays(&excess, 4.0 * tol);
    let l1_convergent = prefix_decays(&l1_distances, 2.0 * tol);
    Ok(ConvergenceReport { sup_errors, norms, limit_norm, l1_distances, locally_uniform, norm_limsup_ok, l1_convergent })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64, y: f64) -> Complex64 {
        Complex64::new(x, y)
    }

    #[test]
    fn evaluate_examples() {
        let sq = PlanarDomain::unit_square();
        let q = QuadDiff::parse("(dz2)", sq.clone()).unwrap();
        assert_eq!(q.evaluate(c(0.3, 0.7)).unwrap(), c(1.0, 0.0));
        assert!(matches!(q.evaluate(c(1.3, 0.7)), Err(Error::PointOutsideDomain(_))));
        let big = PlanarDomain::rectangle(-3.0, 3.0, -3.0, 3.0).unwrap();
        let q = QuadDiff::parse("(mul (z) (dz2))", big).unwrap();
        assert_eq!(q.evaluate(c(0.0, 2.0)).unwrap(), c(0.0, 2.0));
        let p = PlanarDomain::unit_square().with_punctures(vec![[0.5, 0.5]]).unwrap();
        let q = QuadDiff::parse("(dz2)", p).unwrap();
        assert!(matches!(q.evaluate(c(0.5, 0.5)), Err(Error::EvaluationAtPuncture(_))));
    }

    #[test]
    fn l1_norm_examples() {
        let q = QuadDiff::parse("(dz2)", PlanarDomain::unit_square()).unwrap();
        assert!((q.l1_norm(1e-10).unwrap() - 1.0).abs() < 1e-10);
        let q4 = QuadDiff::parse("(dz2)", PlanarDomain::square_with_arm(0.25, 5.0).unwrap()).unwrap();
        assert!((q4.l1_norm(1e-10).unwrap() - 2.0).abs() < 1e-10);
        let q = QuadDiff::parse("(dz2)", PlanarDomain::square_with_arm(0.25, 4.0).unwrap()).unwrap();
        assert!((q.l1_norm(1e-10).unwrap() - 1.75).abs() < 1e-10);
    }

    #[test]
    fn l1_distance_examples() {
        let sq = PlanarDomain::unit_square();
        let a = QuadDiff::parse("(dz2)", sq.clone()).unwrap();
        let b = QuadDiff::parse("(mul (const 1.1 0) (dz2))", sq.clone()).unwrap();
        assert!((a.l1_distance(&b, 1e-10).unwrap() - 0.1).abs() < 1e-9);
        assert!(a.l1_distance(&a, 1e-10).unwrap().abs() < 1e-12);
        let other = QuadDiff::parse("(dz2)", PlanarDomain::unit_disk()).unwrap();
        assert_eq!(a.l1_distance(&other, 1e-6), Err(Error::DomainMismatch));
    }

    #[test]
    fn disk_norm_of_z_squared() {
        // ∫_𝔻 |z|² = π/2
        let q = QuadDiff::parse("(mul (pow (z) 2 1) (dz2))", PlanarDomain::unit_disk()).unwrap();
        assert!((q.l1_norm(1e-9).unwrap() - PI / 2.0).abs() < 1e-8);
    }

    #[test]
    fn pullback_norm_matches_target_area() {
        let q = QuadDiff::pullback("f2", Expr::Dz2).unwrap();
        let n = q.l1_norm(1e-6).unwrap();
        assert!((n - 2.0).abs() < 1e-5, "{n}");
        let s = QuadDiff::pullback("s4", Expr::Dz2).unwrap().l1_norm(1e-6).unwrap();
        assert!((s - 1.25).abs() < 1e-5, "{s}");
    }

    #[test]
    fn pullback_point_value_matches_map_derivative() {
        let q = QuadDiff::pullback("f2", Expr::Dz2).unwrap();
        let z = c(0.5, 0.5);
        let (_, d) = map_by_name("f2").unwrap().eval(z).unwrap();
        assert!((q.evaluate(z).unwrap() - d * d).norm() < 1e-12);
    }

    #[test]
    fn prefix_rule() {
        assert!(prefix_decays(&[1.0, 0.5, 0.25], 1e-9));
        assert!(!prefix_decays(&[1.0, 1.0, 1.0], 1e-9));
        assert!(!prefix_decays(&[1.0, 0.2, 0.4], 1e-9));
        assert!(prefix_decays(&[0.0, 0.0], 1e-9));
    }

    #[test]
    fn scaled_sequence_converges_in_every_sense() {
        let sq = PlanarDomain::unit_square();
        let seq: Vec<QuadDiff> = (1..=20).map(|n| QuadDiff::constant(c(1.0 + 1.0 / n as f64, 0.0), sq.clone())).collect();
        let lim = QuadDiff::constant(c(1.0, 0.0), sq);
        let ex = CompactExhaustion::new(vec![0.2, 0.1]).unwrap();
        let r = classify_convergence(&seq, &lim, &ex, 1e-9).unwrap();
        assert!(r.locally_uniform && r.norm_limsup_ok && r.l1_convergent, "{r:?}");
    }
}
