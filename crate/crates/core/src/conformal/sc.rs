//! Conformal maps from the unit square onto rectilinear polygons.
//!
//! `f = F_P ∘ σ⁻¹ ∘ F_Q⁻¹`, where `F_Q` and `F_P` are strip maps onto the
//! square and the polygon sharing the `-∞` end, and `σ` is the strip
//! automorphism matching the two remaining normalization corners. Quantities
//! integrated over the square are evaluated in the polygon's strip
//! coordinate `s`, where `z = F_Q(σ(s))` and `f(z) = F_P(s)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::strip::StripMap;
use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use crate::quadrature::Rect;

pub const CACHE_VERSION: u32 = 1;
const SOLVE_TOL: f64 = 1e-9;
/// Strip length kept beyond the outermost prevertices when integrating.
pub const STRIP_MARGIN: f64 = 12.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapReport {
    pub residual: f64,
    pub crowded: bool,
    pub min_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquareMap {
    pub version: u32,
    pub name: String,
    pub target: PlanarDomain,
    /// Target vertices receiving the square corners 0, 1 and 1+i.
    pub corners: [usize; 3],
    pub square: StripMap,
    pub polygon: StripMap,
    pub gamma: f64,
    pub delta: f64,
    pub report: MapReport,
}

fn c(x: f64, y: f64) -> Complex64 {
    Complex64::new(x, y)
}

/// Puts the imaginary part of a strip logarithm back into `[0, 1]`.
fn strip_branch(mut s: Complex64) -> Complex64 {
    s.im = s.im.rem_euclid(2.0);
    if s.im > 1.5 {
        s.im -= 2.0;
    }
    s.im = s.im.clamp(0.0, 1.0);
    s
}

impl SquareMap {
    /// Solves the map from `[0,1]²` onto `target` with the square corners
    /// 0, 1, 1+i sent to the target vertices `corners`.
    pub fn new(name: &str, target: &PlanarDomain, corners: [usize; 3]) -> Result<SquareMap> {
        let v = target.vertices_c();
        let n = v.len();
        if target.is_disk() || n < 4 || corners.iter().any(|&k| k >= n) {
            return Err(Error::InvalidDomain("square maps need a rectilinear target".into()));
        }
        let [a, b, cc] = corners;
        let ccw = |from: usize, to: usize| (to + n - from) % n;
        if !(ccw(a, b) < ccw(a, cc) && ccw(a, b) > 0) {
            return Err(Error::InvalidDomain("normalization corners are not in ccw order".into()));
        }
        let plus = (0..n)
            .filter(|&k| ccw(cc, k) > 0 && ccw(cc, k) < ccw(cc, a))
            .max_by(|&x, &y| (v[x] - v[b]).norm().total_cmp(&(v[y] - v[b]).norm()))
            .ok_or_else(|| Error::InvalidDomain("no vertex between the normalization corners".into()))?;
        let sq = [c(0., 0.), c(1., 0.), c(1., 1.), c(0., 1.)];
        let square = StripMap::solve(&sq, 1, 3, SOLVE_TOL)?;
        let polygon = StripMap::solve(&v, b, plus, SOLVE_TOL)?;
        let wc = (polygon.prevertices[cc] * PI).exp().re;
        let wa = (polygon.prevertices[a] * PI).exp().re;
        let sc = (square.prevertices[2] * PI).exp().re;
        let sa = (square.prevertices[0] * PI).exp().re;
        // M(W) = W / (γW + δ) with M(wc) = sc, M(wa) = sa.
        let m = [[wc * sc, sc], [wa * sa, sa]];
        let rhs = [wc, wa];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let gamma = (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det;
        let delta = (m[0][0] * rhs[1] - rhs[0] * m[1][0]) / det;
        if !(delta > 0.0) || !gamma.is_finite() {
            return Err(Error::MapNotConverged(format!("strip automorphism degenerate (δ = {delta})")));
        }
        let report = MapReport {
            residual: square.residual.max(polygon.residual),
            crowded: square.crowded || polygon.crowded,
            min_gap: square.min_gap.min(polygon.min_gap),
        };
        Ok(SquareMap {
            version: CACHE_VERSION,
            name: name.to_string(),
            target: target.clone(),
            corners,
            square,
            polygon,
            gamma,
            delta,
            report,
        })
    }

    /// `Q_n`-style target `[0,1]² ∪ [0,w]×[1,h]` with corners (0,0), (1,0),
    /// (1,1) fixed.
    pub fn square_with_arm(name: &str, w: f64, h: f64) -> Result<SquareMap> {
        let d = PlanarDomain::square_with_arm(w, h)?;
        Self::new(name, &d, [0, 1, 2])
    }

    /// `σ(s)` and `σ'(s)`: polygon strip to square strip.
    pub fn sigma(&self, s: Complex64) -> (Complex64, Complex64) {
        let (g, d) = (self.gamma, self.delta);
        if s.re > 0.0 {
            let e = (-s * PI).exp();
            let den = g + e * d;
            (strip_branch(-den.ln() / PI), e * d / den)
        } else {
            let w = (s * PI).exp();
            let den = w * g + d;
            (strip_branch(s - den.ln() / PI), d / den)
        }
    }

    pub fn sigma_inv(&self, t: Complex64) -> Complex64 {
        let (g, d) = (self.gamma, self.delta);
        if t.re > 0.0 {
            let e = (-t * PI).exp();
            strip_branch((d.ln() - (e - g).ln()) / PI)
        } else {
            let v = (t * PI).exp();
            strip_branch(t + (d.ln() - (-v * g + 1.0).ln()) / PI)
        }
    }

    /// Point of the square and `dz/ds` for polygon-strip coordinate `s`.
    pub fn source_jacobian(&self, s: Complex64) -> Complex64 {
        let (t, dt) = self.sigma(s);
        self.square.dfds(t) * dt
    }

    pub fn source_point(&self, s: Complex64) -> Complex64 {
        self.square.eval(self.sigma(s).0)
    }

    /// Polygon-strip coordinate of a point of the open square.
    pub fn strip_coordinate(&self, z: Complex64, guess: Option<Complex64>) -> Result<Complex64> {
        if !(z.re > 0.0 && z.re < 1.0 && z.im > 0.0 && z.im < 1.0) {
            return Err(Error::PointOutsideDomain(format!("{z} is not in the open unit square")));
        }
        let t = self.square.inverse(z, guess.map(|g| self.sigma(g).0))?;
        Ok(self.sigma_inv(t))
    }

    /// `f(z)` and `f'(z)`.
    pub fn eval(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        let s = self.strip_coordinate(z, None)?;
        Ok((self.polygon.eval(s), self.polygon.dfds(s) / self.source_jacobian(s)))
    }

    /// Integration cells covering the truncated polygon strip.
    pub fn strip_cells(&self) -> Vec<Rect> {
        let (lo, hi) = self.polygon.prevertex_range();
        let mut xs: Vec<f64> = self
            .polygon
            .prevertices
            .iter()
            .filter(|p| p.re.is_finite())
            .map(|p| p.re)
            .collect();
        xs.push(lo - STRIP_MARGIN);
        xs.push(hi + STRIP_MARGIN);
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut cells = Vec::new();
        for w in xs.windows(2) {
            let k = (w[1] - w[0]).ceil().max(1.0) as usize;
            for j in 0..k {
                let x0 = w[0] + (w[1] - w[0]) * j as f64 / k as f64;
                let x1 = w[0] + (w[1] - w[0]) * (j + 1) as f64 / k as f64;
                cells.push(Rect::new(x0, x1, 0.0, 0.5));
                cells.push(Rect::new(x0, x1, 0.5, 1.0));
            }
        }
        cells
    }

    pub fn to_cache_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serializes")
    }

    pub fn from_cache_json(s: &str) -> Result<SquareMap> {
        let mut m: SquareMap = serde_json::from_str(s)?;
        if m.version != CACHE_VERSION {
            return Err(Error::Parse(format!("map cache version {} (expected {CACHE_VERSION})", m.version)));
        }
        m.square = m.square.rehydrate();
        m.polygon = m.polygon.rehydrate();
        Ok(m)
    }
}

/// Names understood by [`map_by_name`]: `f<n>` for `Q_n`, the square with a
/// unit-area arm `[0,1/n]×[1,n+1]`; `s<n>` for the arm `[0,1/n]×[1,√n]`;
/// `id` for the square itself.
pub fn build_named(name: &str) -> Result<SquareMap> {
    let parse = |rest: &str| rest.parse::<u32>().ok().filter(|&n| n >= 2);
    if name == "id" {
        return SquareMap::new("id", &PlanarDomain::unit_square(), [0, 1, 2]);
    }
    if let Some(n) = name.strip_prefix('f').and_then(parse) {
        let n = n as f64;
        return SquareMap::square_with_arm(name, 1.0 / n, n + 1.0);
    }
    if let Some(n) = name.strip_prefix('s').and_then(parse) {
        let n = n as f64;
        if n.sqrt() <= 1.0 {
            return Err(Error::UnknownMap(name.into()));
        }
        return SquareMap::square_with_arm(name, 1.0 / n, n.sqrt());
    }
    Err(Error::UnknownMap(name.into()))
}

fn registry() -> &'static Mutex<HashMap<String, Arc<SquareMap>>> {
    static R: OnceLock<Mutex<HashMap<String, Arc<SquareMap>>>> = OnceLock::new();
    R.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Process-wide map cache keyed by name; maps are solved on first use.
pub fn map_by_name(name: &str) -> Result<Arc<SquareMap>> {
    if let Some(m) = registry().lock().expect("registry lock").get(name) {
        return Ok(m.clone());
    }
    let m = Arc::new(build_named(name)?);
    registry().lock().expect("registry lock").insert(name.to_string(), m.clone());
    Ok(m)
}

pub fn register_map(map: SquareMap) -> Arc<SquareMap> {
    let m = Arc::new(map);
    registry().lock().expect("registry lock").insert(m.name.clone(), m.clone());
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_onto_itself_is_identity() {
        let m = map_by_name("id").unwrap();
        for &z in &[c(0.5, 0.5), c(0.1, 0.8), c(0.93, 0.07)] {
            let (w, d) = m.eval(z).unwrap();
            assert!((w - z).norm() < 1e-6, "{w} vs {z}");
            assert!((d - 1.0).norm() < 1e-6);
        }
    }

    #[test]
    fn normalization_corners_are_fixed() {
        let m = map_by_name("f2").unwrap();
        let corners = [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 1.0)];
        let near = [c(1e-7, 1e-7), c(1.0 - 1e-7, 1e-7), c(1.0 - 1e-7, 1.0 - 1e-7)];
        for (p, q) in corners.iter().zip(&near) {
            let (w, _) = m.eval(*q).unwrap();
            assert!((w - p).norm() < 1e-4, "{w} vs {p}");
        }
    }

    #[test]
    fn sigma_inverse_roundtrip() {
        let m = map_by_name("f4").unwrap();
        for &s in &[c(-3.0, 0.2), c(0.1, 0.9), c(2.0, 0.5), c(-40.0, 0.01)] {
            let back = m.sigma_inv(m.sigma(s).0);
            assert!((back - s).norm() < 1e-9, "{s} -> {back}");
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let m = map_by_name("f2").unwrap();
        let z = c(0.4, 0.6);
        let h = 1e-5;
        let (_, d) = m.eval(z).unwrap();
        let fd = (m.eval(z + h).unwrap().0 - m.eval(z - h).unwrap().0) / (2.0 * h);
        assert!((d - fd).norm() < 1e-6, "{d} vs {fd}");
    }

    #[test]
    fn cache_roundtrip() {
        let m = map_by_name("f2").unwrap();
        let back = SquareMap::from_cache_json(&m.to_cache_json()).unwrap();
        let z = c(0.3, 0.3);
        assert!((back.eval(z).unwrap().0 - m.eval(z).unwrap().0).norm() < 1e-13);
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(matches!(build_named("g3"), Err(Error::UnknownMap(_))));
        assert!(matches!(build_named("f1"), Err(Error::UnknownMap(_))));
    }
}
