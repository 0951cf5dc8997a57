//! Gauss-Legendre rules and adaptive 1-D / 2-D integration.
//!
//! The 2-D integrator refines a quadtree over an axis-aligned rectangle,
//! always splitting the cell with the largest error estimate first. The
//! estimate of a cell is the difference between its own tensor rule and the
//! sum of the rules on its four children. Results are summed in cell-id order
//! so they do not depend on heap ordering.

use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(8))
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(16))
}

/// Values that can be accumulated by the 1-D integrator.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

fn gl_interval<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> T {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = T::zero();
    for (x, w) in rule.0.iter().zip(rule.1.iter()) {
        acc = acc + f(mid + half * x) * (w * half);
    }
    acc
}

/// Globally adaptive bisection: the interval whose 8-point rule disagrees
/// most with its two halves is split until the summed disagreement is below
/// `tol` or `max_intervals` is reached. Returns the value and the error
/// estimate.
pub fn adaptive_1d<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64, tol: f64, max_intervals: usize) -> (T, f64) {
    let piece = |a: f64, b: f64, whole: T| {
        let m = 0.5 * (a + b);
        let left = gl_interval(f, a, m, gl8());
        let right = gl_interval(f, m, b, gl8());
        let err = (left + right - whole).magnitude();
        (a, b, left, right, err)
    };
    let mut parts = vec![piece(a, b, gl_interval(f, a, b, gl8()))];
    let mut total: f64 = parts[0].4;
    while total > tol && parts.len() < max_intervals {
        let (k, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .4.total_cmp(&y.1 .4))
            .expect("nonempty");
        let (pa, pb, left, right, err) = parts[k];
        let m = 0.5 * (pa + pb);
        if (pb - pa).abs() < 1e-15 * (1.0 + pa.abs()) {
            break;
        }
        let l = piece(pa, m, left);
        let r = piece(m, pb, right);
        total += l.4 + r.4 - err;
        parts[k] = l;
        parts.insert(k + 1, r);
    }
    let mut value = T::zero();
    let mut err = 0.0;
    for p in &parts {
        value = value + p.2 + p.3;
        err += p.4;
    }
    (value, err)
}

/// Fixed 16-point rule on `[a, b]`, used where the integrand is known smooth.
pub fn gl16_interval<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> T {
    gl_interval(f, a, b, gl16())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn diameter(&self) -> f64 {
        (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    fn children(&self) -> [Rect; 4] {
        let xm = 0.5 * (self.x0 + self.x1);
        let ym = 0.5 * (self.y0 + self.y1);
        [
            Rect::new(self.x0, xm, self.y0, ym),
            Rect::new(xm, self.x1, self.y0, ym),
            Rect::new(self.x0, xm, ym, self.y1),
            Rect::new(xm, self.x1, ym, self.y1),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Quad2dOptions {
    pub tol: f64,
    pub max_cells: usize,
    /// Cells smaller than this are accepted without further splitting.
    pub min_cell: f64,
}

impl Default for Quad2dOptions {
    fn default() -> Self {
        Quad2dOptions { tol: 1e-8, max_cells: 200_000, min_cell: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Quad2dResult {
    pub value: f64,
    pub error: f64,
    pub cells: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn tensor_rule<F: Fn(f64, f64) -> f64>(f: &F, r: &Rect) -> f64 {
    let (nodes, weights) = gl8();
    let hx = 0.5 * (r.x1 - r.x0);
    let hy = 0.5 * (r.y1 - r.y0);
    let mx = 0.5 * (r.x0 + r.x1);
    let my = 0.5 * (r.y0 + r.y1);
    let mut acc = 0.0;
    for (yi, wy) in nodes.iter().zip(weights) {
        let y = my + hy * yi;
        let mut row = 0.0;
        for (xi, wx) in nodes.iter().zip(weights) {
            row += wx * f(mx + hx * xi, y);
        }
        acc += wy * row;
    }
    acc * hx * hy
}

struct Cell {
    err: f64,
    id: usize,
    rect: Rect,
    children: [f64; 4],
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Adaptive quadtree integration of `f` over a set of rectangles.
pub fn adaptive_2d<F: Fn(f64, f64) -> f64>(f: &F, rects: &[Rect], opts: Quad2dOptions) -> Quad2dResult {
    let mut heap = BinaryHeap::new();
    let mut done: Vec<(usize, f64, f64)> = Vec::new();
    let mut next_id = 0usize;
    let mut evaluations = 0usize;
    let make_cell = |rect: Rect, own: f64, next_id: &mut usize, evaluations: &mut usize| {
        let ch = rect.children();
        let vals = [
            tensor_rule(f, &ch[0]),
            tensor_rule(f, &ch[1]),
            tensor_rule(f, &ch[2]),
            tensor_rule(f, &ch[3]),
        ];
        *evaluations += 4 * 64;
        let sum: f64 = vals.iter().sum();
        let id = *next_id;
        *next_id += 1;
        Cell { err: (sum - own).abs(), id, rect, children: vals }
    };
    for r in rects {
        if r.area() <= 0.0 {
            continue;
        }
        let own = tensor_rule(f, r);
        evaluations += 64;
        heap.push(make_cell(*r, own, &mut next_id, &mut evaluations));
    }
    let total_err = |heap: &BinaryHeap<Cell>, done: &[(usize, f64, f64)]| {
        heap.iter().map(|c| c.err).sum::<f64>() + done.iter().map(|d| d.2).sum::<f64>()
    };
    let mut cells = heap.len();
    let mut err_sum = total_err(&heap, &done);
    while err_sum > opts.tol && cells < opts.max_cells {
        let Some(worst) = heap.pop() else { break };
        if worst.rect.diameter() < opts.min_cell {
            done.push((worst.id, worst.children.iter().sum(), worst.err));
            continue;
        }
        err_sum -= worst.err;
        let ch = worst.rect.children();
        for (k, c) in ch.iter().enumerate() {
            let cell = make_cell(*c, worst.children[k], &mut next_id, &mut evaluations);
            err_sum += cell.err;
            heap.push(cell);
        }
        cells += 3;
        if cells % 4096 == 0 {
            err_sum = total_err(&heap, &done);
        }
    }
    let mut leaves: Vec<(usize, f64, f64)> = heap
        .into_iter()
        .map(|c| (c.id, c.children.iter().sum(), c.err))
        .chain(done)
        .collect();
    leaves.sort_by_key(|l| l.0);
    let value = leaves.iter().map(|l| l.1).sum();
    let error: f64 = leaves.iter().map(|l| l.2).sum();
    Quad2dResult { value, error, cells, evaluations, converged: error <= opts.tol }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((m14 - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_1d_handles_sqrt_endpoint() {
        let (v, _) = adaptive_1d(&|x: f64| x.sqrt(), 0.0, 1.0, 1e-12, 400);
        assert!((v - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn adaptive_2d_inverse_distance_corner() {
        // ∫∫_{[0,1]^2} 1/r = 2 asinh(1)
        let f = |x: f64, y: f64| 1.0 / x.hypot(y);
        let r = adaptive_2d(&f, &[Rect::new(0.0, 1.0, 0.0, 1.0)], Quad2dOptions { tol: 1e-8, ..Default::default() });
        assert!((r.value - 2.0 * 1f64.asinh()).abs() < 1e-7, "{r:?}");
    }
}
