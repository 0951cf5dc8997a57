//! Complete elliptic integrals and the modulus of a half-plane quadrilateral.

use std::f64::consts::PI;

use num_complex::Complex64;

pub fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        let (x, y) = (0.5 * (a + b), (a * b).sqrt());
        if (x - y).abs() <= 1e-16 * x {
            return x;
        }
        a = x;
        b = y;
    }
    a
}

/// `K(k)` given the modulus and its complement `k' = √(1−k²)`, passed
/// separately so neither loses digits near 0 or 1.
pub fn ellip_k(k_comp: f64) -> f64 {
    PI / (2.0 * agm(1.0, k_comp))
}

/// Modulus (width over height) of the rectangle equivalent to a
/// quadrilateral whose marked points, in cyclic order, have cross ratio
/// `λ = (z₂−z₁)(z₄−z₃)/((z₃−z₁)(z₄−z₂))`; the sides `z₁z₂` and `z₃z₄` are
/// the vertical ones.
pub fn modulus_from_cross_ratio(lambda: f64) -> f64 {
    let r = lambda.sqrt();
    let k = (1.0 - r) / (1.0 + r);
    let kc = 2.0 * lambda.sqrt().sqrt() / (1.0 + r);
    2.0 * ellip_k(kc) / ellip_k(k)
}

pub fn cross_ratio(z: [Complex64; 4]) -> f64 {
    let num = (z[1] - z[0]) * (z[3] - z[2]);
    let den = (z[2] - z[0]) * (z[3] - z[1]);
    (num / den).re
}

fn tanh_stable(w: Complex64) -> Complex64 {
    if w.re >= 0.0 {
        let e = (-2.0 * w).exp();
        (1.0 - e) / (1.0 + e)
    } else {
        let e = (2.0 * w).exp();
        (e - 1.0) / (e + 1.0)
    }
}

/// Image on the unit circle of a boundary point of the strip `0 < Im s < 1`
/// under `s ↦ (e^{πs} − i)/(e^{πs} + i)`; the ends go to `∓1`.
pub fn strip_to_circle(s: Complex64) -> Complex64 {
    if s.re == f64::NEG_INFINITY {
        return Complex64::new(-1.0, 0.0);
    }
    if s.re == f64::INFINITY {
        return Complex64::new(1.0, 0.0);
    }
    tanh_stable(0.5 * (PI * s - Complex64::new(0.0, PI / 2.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_of_zero_and_lemniscatic_value() {
        assert!((ellip_k(1.0) - PI / 2.0).abs() < 1e-15);
        // K(1/√2) = Γ(1/4)²/(4√π)
        let gamma_quarter = 3.625_609_908_221_908_f64;
        let exact = gamma_quarter * gamma_quarter / (4.0 * PI.sqrt());
        assert!((ellip_k(0.5f64.sqrt()) - exact).abs() < 1e-13);
    }

    #[test]
    fn symmetric_points_give_unit_modulus() {
        let pts = [PI * 0.25, PI * 0.75, PI * 1.25, PI * 1.75].map(|t| Complex64::from_polar(1.0, t));
        let m = modulus_from_cross_ratio(cross_ratio(pts));
        assert!((m - 1.0).abs() < 1e-14, "{m}");
    }

    #[test]
    fn modulus_swaps_to_reciprocal() {
        let pts = [0.1, 0.9, 2.0, 4.5].map(|t: f64| Complex64::from_polar(1.0, t));
        let a = modulus_from_cross_ratio(cross_ratio(pts));
        let b = modulus_from_cross_ratio(cross_ratio([pts[1], pts[2], pts[3], pts[0]]));
        assert!((a * b - 1.0).abs() < 1e-13, "{a} {b}");
    }

    #[test]
    fn circle_map_ends() {
        assert!((strip_to_circle(Complex64::new(800.0, 0.0)) - 1.0).norm() < 1e-15);
        assert!((strip_to_circle(Complex64::new(-800.0, 1.0)) + 1.0).norm() < 1e-15);
        assert!((strip_to_circle(Complex64::new(0.3, 1.0)).norm() - 1.0).abs() < 1e-14);
    }
}
