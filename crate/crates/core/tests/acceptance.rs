//! The eight acceptance criteria, run in sequence with one result line each.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use qdlab_core::conformal::laplace::{annulus_core_el, modulus};
use qdlab_core::conformal::quadrilateral::Quadrilateral;
use qdlab_core::domain::PlanarDomain;
use qdlab_core::experiments::{continuity_tables, crossing_report, dirichlet_catalog, kernel_tables, minsky_catalog, minsky_suite, punctured_report};
use qdlab_core::lamination::{build_quad_cover, intersection_number, DiscreteLamination, Leaf, SampleConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    id: usize,
    name: &'static str,
    passed: bool,
    seconds: f64,
    limit: f64,
    detail: String,
}

/// Written past the test harness capture so the lines always show.
fn report(v: &Verdict) {
    let ok = v.passed && v.seconds < v.limit;
    let line = format!(
        "[acceptance] criterion {} {}: {} ({:.1}s, limit {:.0}s) {}\n",
        v.id,
        v.name,
        if ok { "PASS" } else { "FAIL" },
        v.seconds,
        v.limit,
        v.detail
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn timed<F: FnOnce() -> (bool, String)>(id: usize, name: &'static str, limit: f64, f: F) -> Verdict {
    let t = Instant::now();
    let (passed, detail) = f();
    let v = Verdict { id, name, passed, seconds: t.elapsed().as_secs_f64(), limit, detail };
    report(&v);
    v
}

fn minsky() -> (bool, String) {
    let cases = minsky_catalog(0, 24).unwrap();
    let rows = minsky_suite(&cases, &SampleConfig { samples: 400, ..Default::default() }, 1e-8).unwrap();
    let held = rows.iter().filter(|r| r.report.holds).count();
    let eq = &rows[0].report;
    let (gap, sq_gap) = ((eq.i - 1.0).abs(), (eq.i * eq.i - eq.bound).abs());
    let oracle = rows.iter().filter_map(|r| r.oracle.map(|o| (r.report.i - o).abs())).fold(0.0, f64::max);
    let ok = rows.len() > 20 && held == rows.len() && gap <= 1e-3 && sq_gap <= 2e-3 && oracle <= 1e-3;
    (ok, format!("{held}/{} pairs hold, |i-1|={gap:.1e}, |i^2-|phi||psi||={sq_gap:.1e}, constant-pair oracle gap {oracle:.1e}", rows.len()))
}

fn punctured() -> (bool, String) {
    let r = punctured_report(128, 200).unwrap();
    let i = r.intersection.value;
    let worst = r.heights.iter().map(|h| h.2.value).fold(0.0, f64::max);
    ((i - 0.25).abs() <= 1e-3 && worst == 0.0, format!("i={i:.6}, {} cycle classes, max height {worst}", r.heights.len()))
}

fn kernel() -> (bool, String) {
    let t = kernel_tables(&[2, 4, 8, 16], &[4, 16, 64], 1e-6).unwrap();
    let norms = t.arm.iter().filter(|r| r.n <= 8).all(|r| (r.norm - 2.0).abs() <= 0.02);
    let l1 = t.arm.iter().map(|r| r.l1_distance).fold(f64::INFINITY, f64::min);
    let sups: Vec<f64> = t.arm.iter().map(|r| r.sup_identity).collect();
    let sup_dec = sups.windows(2).all(|w| w[1] < w[0]);
    let excess = t.sqrt_arm.iter().map(|r| ((r.norm - 1.0) - (1.0 / (r.n as f64).sqrt() - 1.0 / r.n as f64)).abs()).fold(0.0, f64::max);
    let l1s: Vec<f64> = t.sqrt_arm.iter().map(|r| r.l1_distance).collect();
    let l1_dec = l1s.windows(2).all(|w| w[1] < w[0]);
    let ok = norms && l1 >= 0.9 && sup_dec && excess <= 1e-2 && l1_dec;
    (ok, format!("norms within 0.02: {norms}, min L1 {l1:.4}, sup decreasing {sup_dec} {sups:.3?}, sqrt excess gap {excess:.1e}, sqrt L1 decreasing {l1_dec}"))
}

fn dirichlet() -> (bool, String) {
    let rows = dirichlet_catalog(0, 10, 1e-9).unwrap();
    let id = (rows[0].dirichlet - 1.0).abs();
    let least = rows[1..].iter().map(|r| r.dirichlet).fold(f64::INFINITY, f64::min);
    (rows.len() == 11 && id <= 1e-6 && least >= 1.0 - 1e-6, format!("|D(id)-1|={id:.1e}, min D over 10 competitors {least:.12}"))
}

/// The n = 16 bound cannot hold for the scaled sequence when its oracle
/// does: `√(17/16) − 1 ≈ 0.0308`. The criterion is evaluated as written;
/// the returned flag says whether the only miss is that predicted one.
fn continuity() -> (bool, bool, String) {
    let t = continuity_tables(16, &SampleConfig { samples: 1600, ..Default::default() }, 1e-9).unwrap();
    let dec = |rows: &[qdlab_core::lamination::ContinuityRow]| rows.windows(2).all(|w| w[1].gap < w[0].gap);
    let (tilt_dec, scaled_dec) = (dec(&t.tilt.rows), dec(&t.scaled.rows));
    let tilt_last = t.tilt.rows.last().unwrap().gap;
    let scaled_last = t.scaled.rows.last().unwrap().gap;
    let oracle = t.scaled.rows.iter().zip(&t.scaled.oracle).map(|(r, o)| (r.i_n - o).abs()).fold(0.0, f64::max);
    let literal = tilt_dec && scaled_dec && tilt_last <= 1e-2 && scaled_last <= 1e-2 && oracle <= 1e-3;
    let predicted = ((17.0f64 / 16.0).sqrt() - 1.0 - scaled_last).abs() <= 1e-3;
    let only_predicted_miss = tilt_dec && scaled_dec && tilt_last <= 1e-2 && oracle <= 1e-3 && predicted;
    let detail = format!(
        "decreasing tilt {tilt_dec} scaled {scaled_dec}; gap at n=16 tilt {tilt_last:.2e} scaled {scaled_last:.4e} (limit 1e-2, forced to sqrt(17/16)-1 by the oracle); oracle gap {oracle:.1e}"
    );
    (literal, only_predicted_miss, detail)
}

fn modulus_solver() -> (bool, String) {
    let rect = modulus(&Quadrilateral::rectangle(0.0, 2.0, 0.0, 1.0).unwrap(), 256).unwrap();
    let ann = annulus_core_el((-PI).exp(), 256).unwrap();
    let order = ann.order.unwrap_or(f64::NAN);
    let q = Quadrilateral::from_vertices(PlanarDomain::square_with_arm(0.5, 2.0).unwrap(), [5, 0, 2, 4]).unwrap();
    let duality = (modulus(&q, 64).unwrap().value * modulus(&q.swapped(), 64).unwrap().value - 1.0).abs();
    let ok = (rect.value - 2.0).abs() <= 1e-4 && (order - 2.0).abs() <= 0.2 && (ann.value - 2.0).abs() <= 1e-3 && duality <= 1e-3;
    (
        ok,
        format!(
            "2x1 rectangle {:.10} (exact on the five-point grid), annulus {:.6} with order {order:.3}, duality defect {duality:.1e}",
            rect.value, ann.value
        ),
    )
}

fn random_lamination(rng: &mut ChaCha8Rng) -> DiscreteLamination {
    let want = rng.gen_range(0..=20);
    let mut leaves: Vec<Leaf> = Vec::new();
    for _ in 0..200 {
        if leaves.len() == want {
            break;
        }
        let l = Leaf::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(1..=4096) as f64 / 1024.0);
        if leaves.iter().all(|m| !qdlab_core::lamination::crosses(l.pair(), m.pair())) {
            leaves.push(l);
        }
    }
    DiscreteLamination::new(leaves, PlanarDomain::unit_disk()).unwrap()
}

fn orient(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    let (u, v) = (b - a, c - a);
    u.re * v.im - u.im * v.re
}

/// Straight chords of the unit circle cross properly.
fn chords_cross(a: f64, b: f64, c: f64, d: f64) -> bool {
    let p = |t: f64| Complex64::from_polar(1.0, 2.0 * PI * t);
    let (a, b, c, d) = (p(a), p(b), p(c), p(d));
    orient(a, b, c) * orient(a, b, d) < 0.0 && orient(c, d, a) * orient(c, d, b) < 0.0
}

fn exactness() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut bad, mut crossings) = (0, 0);
    for _ in 0..100 {
        let mu = random_lamination(&mut rng);
        let nu = random_lamination(&mut rng);
        // weights are k/1024, so the weighted count is an exact integer over 2^20
        let mut units: i128 = 0;
        for l in &mu.leaves {
            for m in &nu.leaves {
                if chords_cross(l.a, l.b, m.a, m.b) {
                    units += (l.w * 1024.0) as i128 * (m.w * 1024.0) as i128;
                    crossings += 1;
                }
            }
        }
        let brute = units as f64 / (1u64 << 20) as f64;
        let i = intersection_number(&mu, &nu).unwrap();
        let cover = build_quad_cover(&mu, &nu).unwrap().evaluate(&mu, &nu);
        if i != brute || cover != i || intersection_number(&nu, &mu).unwrap() != i {
            bad += 1;
        }
    }
    (bad == 0 && crossings > 0, format!("{bad} of 100 pairs differ from the brute-force count or the cover sum ({crossings} crossing leaf pairs)"))
}

fn two_quadrilaterals() -> (bool, String) {
    let r = crossing_report(64, 200).unwrap();
    (r.gap <= 1e-2 && r.stability <= 1e-3, format!("v1={:.6} v2={:.6} i={:.6} |i-v1v2|={:.1e} grid-doubling change {:.1e}", r.v1, r.v2, r.i, r.gap, r.stability))
}

#[test]
fn acceptance_criteria() {
    let mut verdicts = vec![
        timed(1, "Minsky inequality", 120.0, minsky),
        timed(2, "punctured square example", 60.0, punctured),
        timed(3, "kernel convergence example", 300.0, kernel),
        timed(4, "Dirichlet principle", 60.0, dirichlet),
    ];
    let t = Instant::now();
    let (literal, only_predicted, detail) = continuity();
    let cont = Verdict { id: 5, name: "continuity", passed: literal, seconds: t.elapsed().as_secs_f64(), limit: 120.0, detail };
    report(&cont);
    verdicts.push(timed(6, "modulus solver", 60.0, modulus_solver));
    verdicts.push(timed(7, "combinatorial exactness", 30.0, exactness));
    verdicts.push(timed(8, "two-quadrilateral model", 120.0, two_quadrilaterals));

    let failed: Vec<usize> = verdicts.iter().filter(|v| !(v.passed && v.seconds < v.limit)).map(|v| v.id).collect();
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
    // criterion 5 fails only on its self-contradictory clause
    assert!(literal || (only_predicted && cont.seconds < cont.limit), "continuity failed beyond the predicted clause");
}
