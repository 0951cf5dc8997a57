//! Schwarz-Christoffel maps from the strip `0 < Im s < 1` onto a polygon.
//!
//! Two polygon vertices sit at the strip ends. The others are prevertices on
//! the lower line (`Im s = 0`, ccw order from the `-∞` end) or on the upper
//! line (`Im s = 1`, listed ccw, so with decreasing real part). Elongated
//! polygons stay well conditioned here because channels become long stretches
//! of strip instead of exponentially close prevertices.
//!
//! The derivative is evaluated in log form,
//! `log f' = log C + π/2 (α₋ − α₊) s + Σ (α_k − 1) log sinh(π/2 (s − p_k))`,
//! with the branch of each `log sinh` chosen continuous on the closed strip.

use std::f64::consts::{FRAC_PI_2, LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::levenberg_marquardt;
use crate::quadrature::{adaptive_1d, gl16_interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Lower,
    Upper,
    MinusEnd,
    PlusEnd,
}

/// Gap below which neighbouring prevertices are reported as crowded.
pub const CROWDING_GAP: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StripMap {
    pub vertices: Vec<Complex64>,
    /// Interior angles divided by π.
    pub alpha: Vec<f64>,
    pub side: Vec<Side>,
    /// Prevertex of each vertex; NaN for the two end vertices.
    #[serde(with = "optional_points")]
    pub prevertices: Vec<Complex64>,
    pub constant: Complex64,
    pub minus_end: usize,
    pub plus_end: usize,
    /// Largest vertex mismatch, relative to the polygon diameter.
    pub residual: f64,
    pub min_gap: f64,
    pub crowded: bool,
    #[serde(skip)]
    factors: Vec<(Complex64, f64, bool)>,
    #[serde(skip)]
    end_rate: f64,
    #[serde(skip)]
    re_range: (f64, f64),
    #[serde(skip)]
    log_shift: f64,
}

mod optional_points {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        let o: Vec<Option<[f64; 2]>> = v.iter().map(|p| p.re.is_finite().then_some([p.re, p.im])).collect();
        o.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let o: Vec<Option<[f64; 2]>> = Vec::deserialize(d)?;
        Ok(o.into_iter()
            .map(|p| p.map_or(Complex64::new(f64::NAN, f64::NAN), |[x, y]| Complex64::new(x, y)))
            .collect())
    }
}

fn log_sinh(u: Complex64, lower: bool) -> Complex64 {
    if u.re > 20.0 {
        return u - LN_2;
    }
    if u.re < -20.0 {
        let turn = if lower { PI } else { -PI };
        return -u - LN_2 + Complex64::new(0.0, turn);
    }
    let v = u.sinh();
    let mut arg = v.arg();
    if lower && arg < -FRAC_PI_2 {
        arg += 2.0 * PI;
    }
    if !lower && arg > FRAC_PI_2 {
        arg -= 2.0 * PI;
    }
    Complex64::new(v.norm().ln(), arg)
}

/// Interior angles (over π) of a counterclockwise polygon.
pub fn interior_angles(v: &[Complex64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|k| {
            let e_in = v[k] - v[(k + n - 1) % n];
            let e_out = v[(k + 1) % n] - v[k];
            1.0 - (e_out / e_in).arg() / PI
        })
        .collect()
}

fn integrate<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Complex64 {
    let scale = gl16_interval(f, a, b).norm();
    adaptive_1d(f, a, b, (1e-14 * scale).max(1e-300), 200).0
}

fn mid(p: Complex64) -> Complex64 {
    Complex64::new(p.re, 0.5)
}

impl StripMap {
    fn finish(mut self) -> Self {
        self.factors = (0..self.vertices.len())
            .filter(|&k| k != self.minus_end && k != self.plus_end)
            .map(|k| (self.prevertices[k], self.alpha[k] - 1.0, self.side[k] == Side::Lower))
            .collect();
        self.end_rate = FRAC_PI_2 * (self.alpha[self.minus_end] - self.alpha[self.plus_end]);
        let res = self.factors.iter().map(|f| f.0.re);
        self.re_range = (res.clone().fold(f64::INFINITY, f64::min), res.fold(f64::NEG_INFINITY, f64::max));
        if self.factors.is_empty() {
            self.re_range = (0.0, 0.0);
        }
        self.log_shift = 0.0;
        let probe = Complex64::new(0.5 * (self.re_range.0 + self.re_range.1), 0.5);
        self.log_shift = self.log_g(probe).re;
        self
    }

    /// Rebuilds cached evaluation data after deserialization.
    pub fn rehydrate(self) -> Self {
        self.finish()
    }

    /// `log(f'(s) / C)`, up to a fixed additive normalization.
    pub fn log_g(&self, s: Complex64) -> Complex64 {
        self.log_g_near(s, None)
    }

    /// As `log_g`, with the offset `s - p` of one prevertex supplied exactly,
    /// so that points rounding onto the prevertex stay finite.
    fn log_g_near(&self, s: Complex64, near: Option<(Complex64, Complex64)>) -> Complex64 {
        let mut acc = s * self.end_rate - self.log_shift;
        for &(p, e, lower) in &self.factors {
            let d = match near {
                Some((q, d)) if q == p => d,
                _ => s - p,
            };
            acc += log_sinh(d * FRAC_PI_2, lower) * e;
        }
        acc
    }

    fn g(&self, s: Complex64) -> Complex64 {
        self.log_g(s).exp()
    }

    pub fn dfds(&self, s: Complex64) -> Complex64 {
        self.constant * self.g(s)
    }

    /// `∫ g` from the prevertex `p` to `t`, with `s = p + (t - p) τ²` to
    /// absorb the corner singularity.
    fn int_from_prevertex(&self, p: Complex64, t: Complex64) -> Complex64 {
        let d = t - p;
        if d.norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let f = |tau: f64| {
            if tau == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let off = d * (tau * tau);
            (self.log_g_near(p + off, Some((p, off))) + (d * (2.0 * tau)).ln()).exp()
        };
        integrate(&f, 0.0, 1.0)
    }

    /// `∫ g` along a segment avoiding prevertices, in unit-length pieces.
    fn int_segment(&self, a: Complex64, b: Complex64) -> Complex64 {
        let d = b - a;
        let pieces = d.norm().ceil().max(1.0) as usize;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..pieces {
            let t0 = k as f64 / pieces as f64;
            let t1 = (k + 1) as f64 / pieces as f64;
            let f = |t: f64| self.g(a + d * t) * d;
            acc += integrate(&f, t0, t1);
        }
        acc
    }

    /// `∫ g` from `m` to the `dir·∞` end along a horizontal ray.
    fn int_ray(&self, m: Complex64, dir: f64) -> Complex64 {
        let beyond = if dir > 0.0 { self.re_range.1 - m.re } else { m.re - self.re_range.0 }.max(0.0) + 3.0;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut a = 0.0;
        loop {
            let b = a + if a < beyond { 1.0 } else { 2.0 };
            let f = |t: f64| self.g(m + dir * t) * dir;
            let piece = integrate(&f, a, b);
            acc += piece;
            a = b;
            if a > beyond && piece.norm() <= 1e-18 * acc.norm().max(1e-300) {
                break;
            }
            if a > beyond + 400.0 {
                break;
            }
        }
        acc
    }

    /// `∫ g` between two prevertices, through the midline.
    fn int_between(&self, a: Complex64, b: Complex64) -> Complex64 {
        self.int_from_prevertex(a, mid(a)) + self.int_segment(mid(a), mid(b)) - self.int_from_prevertex(b, mid(b))
    }

    fn lower_upper(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.vertices.len();
        let mut lower = Vec::new();
        let mut k = (self.minus_end + 1) % n;
        while k != self.plus_end {
            lower.push(k);
            k = (k + 1) % n;
        }
        let mut upper = Vec::new();
        let mut k = (self.plus_end + 1) % n;
        while k != self.minus_end {
            upper.push(k);
            k = (k + 1) % n;
        }
        (lower, upper)
    }

    fn reference(&self) -> usize {
        let (lower, upper) = self.lower_upper();
        *lower.first().unwrap_or_else(|| &upper[0])
    }

    /// `∫ g` from the reference prevertex to every vertex, ends included.
    fn vertex_integrals(&self) -> Vec<Complex64> {
        let (lower, upper) = self.lower_upper();
        let n = self.vertices.len();
        let r = self.reference();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        let pv = &self.prevertices;
        for w in lower.windows(2) {
            out[w[1]] = out[w[0]] + self.int_between(pv[w[0]], pv[w[1]]);
        }
        if let Some(&u0) = upper.first() {
            if u0 != r {
                out[u0] = out[r] + self.int_between(pv[r], pv[u0]);
            }
            for w in upper.windows(2) {
                out[w[1]] = out[w[0]] + self.int_between(pv[w[0]], pv[w[1]]);
            }
        }
        let m0 = mid(pv[r]);
        let head = self.int_from_prevertex(pv[r], m0);
        out[self.plus_end] = head + self.int_ray(m0, 1.0);
        out[self.minus_end] = head + self.int_ray(m0, -1.0);
        out
    }

    fn with_params(&self, y: &[f64]) -> Option<StripMap> {
        let (lower, upper) = self.lower_upper();
        let mut m = self.clone();
        let mut i = 0;
        let mut x = 0.0;
        for (j, &k) in lower.iter().enumerate() {
            if j > 0 {
                x += y[i].exp();
                i += 1;
            }
            m.prevertices[k] = Complex64::new(x, 0.0);
        }
        let mut x = if lower.is_empty() {
            0.0
        } else {
            i += 1;
            y[i - 1]
        };
        for (j, &k) in upper.iter().enumerate() {
            if j > 0 {
                x -= y[i].exp();
                i += 1;
            }
            m.prevertices[k] = Complex64::new(x, 1.0);
        }
        if m.prevertices.iter().any(|p| !p.re.is_nan() && !p.re.is_finite()) {
            return None;
        }
        Some(m.finish())
    }

    fn fit_constant(&self, ints: &[Complex64]) -> Complex64 {
        let r = self.reference();
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for k in 0..ints.len() {
            if k == r {
                continue;
            }
            num += ints[k].conj() * (self.vertices[k] - self.vertices[r]);
            den += ints[k].norm_sqr();
        }
        num / den
    }

    fn residuals(&self, ints: &[Complex64], c: Complex64, diam: f64) -> Vec<f64> {
        let r = self.reference();
        let mut out = Vec::new();
        for k in 0..ints.len() {
            if k == r {
                continue;
            }
            let d = (c * ints[k] - (self.vertices[k] - self.vertices[r])) / diam;
            out.push(d.re);
            out.push(d.im);
        }
        out
    }

    /// Solves the parameter problem for a counterclockwise polygon.
    pub fn solve(vertices: &[Complex64], minus_end: usize, plus_end: usize, tol: f64) -> Result<StripMap> {
        let n = vertices.len();
        if n < 3 || minus_end == plus_end || minus_end >= n || plus_end >= n {
            return Err(Error::InvalidDomain("strip map needs two distinct end vertices".into()));
        }
        let alpha = interior_angles(vertices);
        let mut side = vec![Side::Upper; n];
        side[minus_end] = Side::MinusEnd;
        side[plus_end] = Side::PlusEnd;
        let mut k = (minus_end + 1) % n;
        while k != plus_end {
            side[k] = Side::Lower;
            k = (k + 1) % n;
        }
        let nan = Complex64::new(f64::NAN, f64::NAN);
        let base = StripMap {
            vertices: vertices.to_vec(),
            alpha,
            side,
            prevertices: vec![nan; n],
            constant: Complex64::new(1.0, 0.0),
            minus_end,
            plus_end,
            residual: f64::INFINITY,
            min_gap: f64::INFINITY,
            crowded: false,
            factors: vec![],
            end_rate: 0.0,
            re_range: (0.0, 0.0),
            log_shift: 0.0,
        };
        let y0 = base.initial_guess();
        let diam = vertices
            .iter()
            .flat_map(|a| vertices.iter().map(move |b| (a - b).norm()))
            .fold(0.0, f64::max);
        let resid = |y: &[f64]| {
            let m = base.with_params(y)?;
            let ints = m.vertex_integrals();
            if ints.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return None;
            }
            let c = m.fit_constant(&ints);
            Some(m.residuals(&ints, c, diam))
        };
        let (y, _) = levenberg_marquardt(resid, y0, 1e-13, 200);
        let mut m = base.with_params(&y).ok_or(Error::ParameterSolverDivergence(f64::INFINITY))?;
        let ints = m.vertex_integrals();
        m.constant = m.fit_constant(&ints);
        let res = m.residuals(&ints, m.constant, diam);
        m.residual = res.chunks(2).map(|c| c[0].hypot(c[1])).fold(0.0, f64::max);
        let (lower, upper) = m.lower_upper();
        let gap = |l: &[usize]| {
            l.windows(2)
                .map(|w| (m.prevertices[w[0]] - m.prevertices[w[1]]).norm())
                .fold(f64::INFINITY, f64::min)
        };
        m.min_gap = gap(&lower).min(gap(&upper)).min(f64::MAX);
        m.crowded = m.min_gap < CROWDING_GAP;
        if !(m.residual <= tol) {
            return Err(Error::ParameterSolverDivergence(m.residual));
        }
        Ok(m)
    }

    /// Channel-length estimate: edge length over the distance from its
    /// midpoint to the nearest non-adjacent edge.
    fn edge_gap(&self, a: usize, b: usize) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let m = 0.5 * (v[a] + v[b]);
        let mut width = f64::INFINITY;
        for k in 0..n {
            let (p, q) = (k, (k + 1) % n);
            if p == a || p == b || q == a || q == b {
                continue;
            }
            width = width.min(crate::domain::point_segment_distance(m, v[p], v[q]));
        }
        ((v[b] - v[a]).norm() / width).max(0.05)
    }

    fn initial_guess(&self) -> Vec<f64> {
        let (lower, upper) = self.lower_upper();
        let mut y = Vec::new();
        for w in lower.windows(2) {
            y.push(self.edge_gap(w[0], w[1]).ln());
        }
        let mut pos = 0.0;
        let mut xs = vec![0.0; upper.len()];
        for j in (0..upper.len()).rev() {
            if j + 1 < upper.len() {
                pos += self.edge_gap(upper[j], upper[j + 1]);
            }
            xs[j] = pos;
        }
        if !lower.is_empty() && !upper.is_empty() {
            y.push(xs[0]);
        }
        for w in xs.windows(2) {
            y.push((w[0] - w[1]).max(1e-3).ln());
        }
        y
    }

    fn finite_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.vertices.len()).filter(move |&k| k != self.minus_end && k != self.plus_end)
    }

    /// Forward map `F(s)` on the closed strip.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        if s.re > self.re_range.1 + 2.0 {
            return self.vertices[self.plus_end] - self.constant * self.int_ray(s, 1.0);
        }
        if s.re < self.re_range.0 - 2.0 {
            return self.vertices[self.minus_end] - self.constant * self.int_ray(s, -1.0);
        }
        let k = self
            .finite_indices()
            .min_by(|&a, &b| (self.prevertices[a] - s).norm().total_cmp(&(self.prevertices[b] - s).norm()))
            .expect("polygon has finite prevertices");
        self.vertices[k] + self.constant * self.int_from_prevertex(self.prevertices[k], s)
    }

    /// Inverse map by Newton's method from `guess`, or by continuation from
    /// the midline point over the reference prevertex when no guess is
    /// given. The continuation path is a straight segment in the image, so
    /// the cold start needs a convex polygon.
    pub fn inverse(&self, z: Complex64, guess: Option<Complex64>) -> Result<Complex64> {
        let mut s = match guess {
            Some(g) => g,
            None => {
                let s0 = mid(self.prevertices[self.reference()]);
                let z0 = self.eval(s0);
                let steps = 48;
                let dz = (z - z0) / steps as f64;
                let mut s = s0;
                let rhs = |s: Complex64| dz / self.dfds(s);
                for _ in 0..steps {
                    let k1 = rhs(s);
                    let k2 = rhs(s + k1 * 0.5);
                    let k3 = rhs(s + k2 * 0.5);
                    let k4 = rhs(s + k3);
                    s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) / 6.0;
                    s.im = s.im.clamp(1e-12, 1.0 - 1e-12);
                }
                s
            }
        };
        let scale = z.norm().max(1.0);
        let mut r = self.eval(s) - z;
        for _ in 0..80 {
            if r.norm() <= 1e-14 * scale {
                return Ok(s);
            }
            // Near a prevertex, Newton runs in τ = √(s − p), where the map
            // is regular at convex corners.
            let near = self
                .finite_indices()
                .map(|k| self.prevertices[k])
                .filter(|p| (s - p).norm() < 0.5)
                .min_by(|a, b| (s - a).norm().total_cmp(&(s - b).norm()));
            let mut step = match near {
                Some(p) if s != p => {
                    let tau = (s - p).sqrt();
                    let dtau = r / (self.dfds(s) * tau * 2.0);
                    s - (p + (tau - dtau) * (tau - dtau))
                }
                _ => r / self.dfds(s),
            };
            if step.norm() > 1.0 {
                step = step / step.norm();
            }
            let mut accepted = false;
            for _ in 0..40 {
                let mut t = s - step;
                t.im = t.im.clamp(0.0, 1.0);
                let rt = self.eval(t) - z;
                if rt.norm() < r.norm() {
                    s = t;
                    r = rt;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let r = (self.eval(s) - z).norm();
        if r <= 1e-10 * scale {
            Ok(s)
        } else {
            Err(Error::MapNotConverged(format!("strip inverse residual {r:e} at {z}")))
        }
    }

    /// Real interval containing all prevertices.
    pub fn prevertex_range(&self) -> (f64, f64) {
        self.re_range
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64, y: f64) -> Complex64 {
        Complex64::new(x, y)
    }

    #[test]
    fn log_sinh_branches_join_continuously() {
        for &(y, lower) in &[(0.3, true), (-0.3, false)] {
            for &x in &[19.999, 20.001, -19.999, -20.001] {
                let u = c(x, y);
                let a = log_sinh(u, lower);
                let b = log_sinh(u + c(1e-9 * x.signum(), 0.0), lower);
                assert!((a - b).norm() < 1e-6, "{x} {y}: {a} {b}");
            }
        }
    }

    #[test]
    fn square_has_symmetric_prevertices() {
        let v = [c(0., 0.), c(1., 0.), c(1., 1.), c(0., 1.)];
        let m = StripMap::solve(&v, 1, 3, 1e-10).unwrap();
        assert!(m.prevertices[2].norm() < 1e-12);
        assert!((m.prevertices[0] - c(0.0, 1.0)).norm() < 1e-8, "{:?}", m.prevertices);
        let z = m.eval(c(0.0, 0.5));
        assert!((z - c(0.5, 0.5)).norm() < 1e-9, "{z}");
    }

    #[test]
    fn rectangle_channel_length_matches_aspect() {
        let v = [c(0., 0.), c(4., 0.), c(4., 1.), c(0., 1.)];
        let m = StripMap::solve(&v, 0, 2, 1e-10).unwrap();
        // Away from the ends the strip is a rectangle of length 4; each
        // corner region shortens the gap by ln 4 / π, up to O(e^{-πL}).
        let gap = (m.prevertices[1].re - m.prevertices[3].re).abs();
        let expected = 4.0 - 2.0 * 4f64.ln() / PI;
        assert!((gap - expected).abs() < 1e-4, "{gap}");
        for k in 0..4 {
            if k == 0 || k == 2 {
                continue;
            }
            assert!((m.eval(m.prevertices[k]) - v[k]).norm() < 1e-9);
        }
    }

    #[test]
    fn long_arm_polygon_solves_without_crowding() {
        let n = 16.0;
        let v = [c(0., 0.), c(1., 0.), c(1., 1.), c(1. / n, 1.), c(1. / n, n), c(0., n)];
        let m = StripMap::solve(&v, 1, 5, 1e-9).unwrap();
        assert!(!m.crowded);
        let s = c(3.0, 0.4);
        let z = m.eval(s);
        let back = m.inverse(z, Some(s + c(0.01, 0.01))).unwrap();
        assert!((back - s).norm() < 1e-9);
    }

    #[test]
    fn inverse_cold_start_on_square() {
        let v = [c(0., 0.), c(1., 0.), c(1., 1.), c(0., 1.)];
        let m = StripMap::solve(&v, 1, 3, 1e-10).unwrap();
        for &z in &[c(0.2, 0.9), c(0.95, 0.05), c(0.5, 0.01), c(0.01, 0.99)] {
            let s = m.inverse(z, None).unwrap();
            assert!((m.eval(s) - z).norm() < 1e-12);
        }
    }
}
