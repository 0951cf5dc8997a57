//! Conformal maps, moduli of quadrilaterals and extremal length.

pub mod crossing;
pub mod elliptic;
pub mod extremal;
pub mod laplace;
pub mod quadrilateral;
pub mod sc;
pub mod strip;

use std::sync::Arc;

use num_complex::Complex64;

use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use laplace::Uniformizer;
use sc::SquareMap;

#[derive(Debug, Clone)]
pub enum ConformalMap {
    Identity,
    SchwarzChristoffel(Arc<SquareMap>),
    Uniformization(Box<Uniformizer>),
}

impl ConformalMap {
    /// Image point and derivative.
    pub fn eval(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        match self {
            ConformalMap::Identity => Ok((z, Complex64::new(1.0, 0.0))),
            ConformalMap::SchwarzChristoffel(m) => m.eval(z),
            ConformalMap::Uniformization(u) => {
                let outside = || Error::PointOutsideDomain(format!("{z}"));
                let f = u.eval(z).ok_or_else(outside)?;
                let d = u.derivative(z).ok_or_else(outside)?;
                Ok((f, d))
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ConformalMap::Identity => "identity",
            ConformalMap::SchwarzChristoffel(_) => "schwarz-christoffel",
            ConformalMap::Uniformization(_) => "rectangle-uniformization",
        }
    }
}

/// Schwarz-Christoffel map from the unit square onto a rectilinear polygon
/// sending the square corners 0, 1 and 1+i to the vertices `corners`.
pub fn sc_map(target: &PlanarDomain, corners: [usize; 3]) -> Result<ConformalMap> {
    let name = format!("sc{:?}{}", corners, target.to_json());
    Ok(ConformalMap::SchwarzChristoffel(sc::register_map(SquareMap::new(&name, target, corners)?)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sc_map_of_square_is_identity_and_has_no_fold() {
        let m = sc_map(&PlanarDomain::unit_square(), [0, 1, 2]).unwrap();
        assert_eq!(m.kind(), "schwarz-christoffel");
        for k in 1..8 {
            let z = Complex64::new(k as f64 / 8.0, 0.3 + 0.05 * k as f64);
            let (w, d) = m.eval(z).unwrap();
            assert!((w - z).norm() < 1e-6 && d.norm_sqr() > 0.0);
        }
    }

    #[test]
    fn arm_map_shrinks_toward_identity() {
        let sup = |n: u32| {
            let m = sc::map_by_name(&format!("f{n}")).unwrap();
            let mut s: f64 = 0.0;
            for i in 0..=8 {
                for j in 0..=8 {
                    let z = Complex64::new(0.1 + 0.1 * i as f64, 0.1 + 0.1 * j as f64);
                    s = s.max((m.eval(z).unwrap().0 - z).norm());
                }
            }
            s
        };
        assert!(sup(8) < sup(2));
    }
}
