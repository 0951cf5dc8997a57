use num_complex::Complex64;
use proptest::prelude::*;
use qdlab_core::domain::PlanarDomain;
use qdlab_core::foliation::{PartialFoliation, TransverseArc};
use qdlab_core::lamination::{build_quad_cover, crosses, intersection_number, DiscreteLamination, ExactSum, Leaf};

/// Greedy disjoint subset of the candidate chords, weights `k/1024`.
fn lamination(raw: Vec<(f64, f64, u32)>) -> DiscreteLamination {
    let mut leaves: Vec<Leaf> = Vec::new();
    for (a, b, k) in raw {
        let l = Leaf::new(a, b, k as f64 / 1024.0);
        if (l.a - l.b).abs() > 1e-9 && leaves.iter().all(|m| !crosses(l.pair(), m.pair())) {
            leaves.push(l);
        }
    }
    DiscreteLamination::new(leaves, PlanarDomain::unit_disk()).unwrap()
}

fn laminations() -> impl Strategy<Value = DiscreteLamination> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 1u32..4096), 0..24).prop_map(lamination)
}

fn chord_point(t: f64) -> Complex64 {
    Complex64::from_polar(1.0, std::f64::consts::TAU * t)
}

fn orient(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    let (u, v) = (b - a, c - a);
    u.re * v.im - u.im * v.re
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn intersection_is_symmetric(mu in laminations(), nu in laminations()) {
        prop_assert_eq!(intersection_number(&mu, &nu).unwrap(), intersection_number(&nu, &mu).unwrap());
    }

    #[test]
    fn intersection_scales_exactly_by_powers_of_two(mu in laminations(), nu in laminations(), p in -8i32..8, q in -8i32..8) {
        let (a, b) = (2f64.powi(p), 2f64.powi(q));
        let i = intersection_number(&mu, &nu).unwrap();
        prop_assert_eq!(intersection_number(&mu.scaled(a), &nu.scaled(b)).unwrap(), a * b * i);
    }

    #[test]
    fn intersection_is_additive_over_disjoint_unions(mu in laminations(), nu in laminations(), split in 0usize..24) {
        let k = split.min(mu.leaves.len());
        let first = DiscreteLamination::new(mu.leaves[..k].to_vec(), mu.ambient.clone()).unwrap();
        let rest = DiscreteLamination::new(mu.leaves[k..].to_vec(), mu.ambient.clone()).unwrap();
        let parts = intersection_number(&first, &nu).unwrap() + intersection_number(&rest, &nu).unwrap();
        // both parts are multiples of 2^-20 well inside the exact range
        prop_assert_eq!(parts, intersection_number(&mu, &nu).unwrap());
    }

    #[test]
    fn cover_agrees_with_direct_sum(mu in laminations(), nu in laminations()) {
        let cover = build_quad_cover(&mu, &nu).unwrap();
        prop_assert!(cover.verify(&mu, &nu));
        prop_assert_eq!(cover.evaluate(&mu, &nu), intersection_number(&mu, &nu).unwrap());
    }

    #[test]
    fn combinatorial_crossing_matches_straight_chords(a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64, d in 0.0..1.0f64) {
        let gaps = [a - c, a - d, b - c, b - d, a - b, c - d];
        prop_assume!(gaps.iter().all(|g| g.abs() > 1e-6));
        let (pa, pb, pc, pd) = (chord_point(a), chord_point(b), chord_point(c), chord_point(d));
        let geometric = orient(pa, pb, pc) * orient(pa, pb, pd) < 0.0 && orient(pc, pd, pa) * orient(pc, pd, pb) < 0.0;
        prop_assert_eq!(crosses((a, b), (c, d)), geometric);
    }

    #[test]
    fn exact_sum_ignores_order(mut xs in prop::collection::vec(-1e12..1e12f64, 1..64), seed in any::<u64>()) {
        let mut s = ExactSum::new();
        xs.iter().for_each(|&x| s.add(x));
        let forward = s.value();
        let k = (seed % xs.len() as u64) as usize;
        xs.rotate_left(k);
        xs.reverse();
        let mut t = ExactSum::new();
        xs.iter().for_each(|&x| t.add(x));
        prop_assert_eq!(forward, t.value());
        prop_assert!(forward.is_finite());
    }

    #[test]
    fn transverse_measure_ignores_subdivision(x0 in 0.05..0.95f64, y0 in 0.05..0.95f64, x1 in 0.05..0.95f64, y1 in 0.05..0.95f64, t in 0.05..0.95f64) {
        let f = PartialFoliation::horizontal(PlanarDomain::unit_square());
        let (a, b) = (Complex64::new(x0, y0), Complex64::new(x1, y1));
        let whole = f.transverse_measure(&TransverseArc::segment(a, b), 1e-10).unwrap();
        let split = f.transverse_measure(&TransverseArc::from_points(&[a, a + (b - a) * t, b]), 1e-10).unwrap();
        prop_assert!((whole - split).abs() <= 1e-9);
        prop_assert!((whole - (y1 - y0).abs()).abs() <= 1e-9);
    }
}
