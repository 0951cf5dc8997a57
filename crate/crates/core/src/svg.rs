//! Minimal static SVG emission.

use std::fmt::Write;

use num_complex::Complex64;

use crate::domain::{DomainKind, PlanarDomain};
use crate::quadrature::Rect;

pub struct Canvas {
    view: Rect,
    size: f64,
    body: String,
}

impl Canvas {
    /// Canvas showing `view` with a margin, `size` pixels on the long side.
    pub fn new(view: Rect, size: f64) -> Self {
        let m = 0.05 * (view.x1 - view.x0).max(view.y1 - view.y0);
        Canvas { view: Rect::new(view.x0 - m, view.x1 + m, view.y0 - m, view.y1 + m), size, body: String::new() }
    }

    pub fn for_domain(domain: &PlanarDomain, size: f64) -> Self {
        let mut c = Canvas::new(domain.bbox(), size);
        c.domain(domain);
        c
    }

    fn scale(&self) -> f64 {
        self.size / (self.view.x1 - self.view.x0).max(self.view.y1 - self.view.y0)
    }

    fn xy(&self, z: Complex64) -> (f64, f64) {
        let s = self.scale();
        ((z.re - self.view.x0) * s, (self.view.y1 - z.im) * s)
    }

    fn points(&self, pts: &[Complex64]) -> String {
        let mut s = String::new();
        for z in pts {
            let (x, y) = self.xy(*z);
            let _ = write!(s, "{x:.3},{y:.3} ");
        }
        s.trim_end().to_string()
    }

    pub fn polyline(&mut self, pts: &[Complex64], stroke: &str, width: f64) {
        let p = self.points(pts);
        let _ = writeln!(self.body, r#"<polyline points="{p}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#);
    }

    pub fn polygon(&mut self, pts: &[Complex64], fill: &str, opacity: f64) {
        let p = self.points(pts);
        let _ = writeln!(self.body, r#"<polygon points="{p}" fill="{fill}" fill-opacity="{opacity}" stroke="none"/>"#);
    }

    pub fn dot(&mut self, z: Complex64, r: f64, fill: &str) {
        let (x, y) = self.xy(z);
        let _ = writeln!(self.body, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{r}" fill="{fill}"/>"#);
    }

    pub fn domain(&mut self, d: &PlanarDomain) {
        match &d.kind {
            DomainKind::UnitDisk => {
                let (cx, cy) = self.xy(Complex64::new(0.0, 0.0));
                let r = self.scale();
                let _ = writeln!(self.body, r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="{r:.3}" fill="none" stroke="black" stroke-width="1.5"/>"#);
            }
            DomainKind::Rectilinear { .. } => {
                let mut v = d.vertices_c();
                v.push(v[0]);
                self.polyline(&v, "black", 1.5);
            }
        }
        for p in d.puncture_points() {
            self.dot(p, 2.5, "black");
        }
    }

    pub fn finish(self) -> String {
        let w = (self.view.x1 - self.view.x0) * self.scale();
        let h = (self.view.y1 - self.view.y0) * self.scale();
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.3} {h:.3}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_outline() {
        let svg = Canvas::for_domain(&PlanarDomain::unit_square(), 200.0).finish();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }
}
