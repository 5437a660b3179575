use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tentlab::geometry::{BoundaryPoint, DomainGeometry, Point, C64};
use tentlab::LabError;

fn random_collar_point(geom: &DomainGeometry, rng: &mut ChaCha8Rng) -> Point {
    let depth = rng.random_range(1e-3..geom.epsilon0() * 0.999);
    let r = 1.0 - depth;
    match geom.n() {
        1 => Point::polar(r, rng.random_range(0.0..2.0 * PI)),
        _ => {
            let mut v = [0.0f64; 4];
            loop {
                for x in &mut v {
                    *x = rng.random_range(-1.0..1.0);
                }
                let n2: f64 = v.iter().map(|x| x * x).sum();
                if n2 > 1e-4 && n2 <= 1.0 {
                    let s = r / n2.sqrt();
                    return Point::ball(C64::new(v[0] * s, v[1] * s), C64::new(v[2] * s, v[3] * s));
                }
            }
        }
    }
}

#[test]
fn disc_kernel_matches_its_power_series() {
    let g = DomainGeometry::disc();
    let z = Point::disc(C64::new(0.5, 0.0));
    let k = g.bergman_kernel(&z, &z).unwrap();
    let series: f64 = (0..=200).map(|n| (n + 1) as f64 * 0.25f64.powi(n)).sum::<f64>() / PI;
    assert_relative_eq!(k.re, series, max_relative = 1e-12);
    assert_relative_eq!(k.re, 0.56588, epsilon = 1e-5);
    assert!(k.im.abs() < 1e-15);

    let w = Point::disc(C64::new(0.3, -0.4));
    let x = z.inner(&w);
    let series: C64 = (0..=200).map(|n| x.powi(n) * (n + 1) as f64).sum::<C64>() / PI;
    assert!((g.bergman_kernel(&z, &w).unwrap() - series).norm() < 1e-12);
}

#[test]
fn ball_kernel_reproduces_constants() {
    // K(0, 0) |B2| = 1 with |B2| = pi^2 / 2.
    let b = DomainGeometry::ball2();
    let k = b.bergman_kernel(&Point::default(), &Point::default()).unwrap();
    assert_relative_eq!(k.re * PI * PI / 2.0, 1.0, epsilon = 1e-14);
    assert_relative_eq!(b.volume(), PI * PI / 2.0, epsilon = 1e-14);
}

#[test]
fn kernel_refuses_the_diagonal_at_the_boundary() {
    let g = DomainGeometry::disc();
    let z = Point::disc(C64::new(1.0, 0.0));
    assert!(matches!(g.bergman_kernel(&z, &z), Err(LabError::NearSingularKernel(_))));
}

#[test]
fn exact_disc_tent_area_against_a_pixel_count() {
    // Count midpoints of a fine square lattice inside the tent.
    let g = DomainGeometry::disc();
    let zeta = BoundaryPoint::from_angle(0.0);
    let delta = 0.1;
    let h = 1e-4;
    let mut count = 0u64;
    let (x0, y0) = (0.88, -0.11);
    let (nx, ny) = ((0.12 / h) as usize, (0.22 / h) as usize);
    for i in 0..nx {
        for j in 0..ny {
            let p = Point::disc(C64::new(x0 + (i as f64 + 0.5) * h, y0 + (j as f64 + 0.5) * h));
            count += u64::from(g.tent_contains(&zeta, delta, &p));
        }
    }
    let pixels = count as f64 * h * h;
    let exact = g.tent_volume(&zeta, delta).unwrap();
    assert_relative_eq!(exact, pixels, max_relative = 2e-3);
    assert_relative_eq!(exact, 4.0 * 0.05f64.asin() * (0.1 - 0.005), epsilon = 1e-15);
    let ratio = exact / g.tent_volume_model(&zeta, delta).unwrap();
    assert!((1.85..1.95).contains(&ratio), "{ratio}");
}

#[test]
fn ball_tent_volume_against_monte_carlo() {
    let b = DomainGeometry::ball2();
    let zeta = BoundaryPoint::normalize(Point::ball(C64::new(1.0, 0.0), C64::new(0.0, 0.0))).unwrap();
    let delta = 0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 400_000;
    let mut hits = 0;
    for _ in 0..n {
        let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let p = Point::ball(C64::new(v[0], v[1]), C64::new(v[2], v[3]));
        hits += usize::from(b.tent_contains(&zeta, delta, &p));
    }
    let mc = 16.0 * hits as f64 / n as f64;
    let exact = b.tent_volume(&zeta, delta).unwrap();
    let sigma = 16.0 * (exact / 16.0 / n as f64).sqrt();
    assert!((mc - exact).abs() < 4.0 * sigma, "mc {mc} exact {exact}");
}

#[test]
fn kernel_bound_ratio_examples() {
    let g = DomainGeometry::disc();
    let v = g.kernel_bound_ratio(&Point::polar(0.9, 0.0), &Point::polar(0.9, PI / 2.0)).unwrap();
    assert!(v.is_finite() && v > 0.0);
    // q1 = q2 = r: t = 2(1 - r), K = 1 / (pi (1 - r^2)^2).
    let mut last = 0.0;
    for r in [0.8, 0.9, 0.99, 0.999] {
        let q = Point::polar(r, 0.0);
        let t: f64 = 2.0 * (1.0 - r);
        let expected = 4.0 * (t / 2.0).asin() * (t - t * t / 2.0) / (PI * (1.0 - r * r).powi(2));
        let got = g.kernel_bound_ratio(&q, &q).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-12);
        assert!(got < 1.0);
        last = got;
    }
    // Limit 4 * 2 / (pi * 4) as r -> 1.
    assert_relative_eq!(last, 2.0 / PI, max_relative = 1e-2);
}

fn ratio_sup(geom: &DomainGeometry, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sup: f64 = 0.0;
    for _ in 0..pairs {
        let q1 = random_collar_point(geom, &mut rng);
        let q2 = random_collar_point(geom, &mut rng);
        sup = sup.max(geom.kernel_bound_ratio(&q1, &q2).unwrap());
    }
    sup
}

#[test]
fn kernel_bound_ratio_sup_is_stable_under_doubling() {
    for geom in [DomainGeometry::disc(), DomainGeometry::ball2()] {
        let small = ratio_sup(&geom, 1000, 1);
        let large = ratio_sup(&geom, 2000, 1);
        assert!(small.is_finite() && large >= small);
        assert!(large <= 1.1 * small, "{:?}: {small} -> {large}", geom.kind());
    }
}

proptest! {
    #[test]
    fn tents_double(theta in 0.0..(2.0 * PI), delta in 1e-4f64..0.49) {
        for geom in [DomainGeometry::disc(), DomainGeometry::ball2()] {
            let zeta = match geom.n() {
                1 => BoundaryPoint::from_angle(theta),
                _ => BoundaryPoint::normalize(Point::ball(
                    C64::from_polar(theta.cos(), theta),
                    C64::from_polar(theta.sin(), 0.3),
                )).unwrap(),
            };
            let q = geom.tent_volume(&zeta, delta).unwrap() / geom.tent_volume(&zeta, delta / 2.0).unwrap();
            prop_assert!((2.0..=16.0).contains(&q), "{q}");
            let m = geom.tent_volume(&zeta, delta).unwrap() / geom.tent_volume_model(&zeta, delta).unwrap();
            // Disc ratio tends to 2, ball ratio to pi^2, as delta shrinks.
            let (lo, hi) = if geom.n() == 1 { (1.5, 2.0) } else { (2.0, PI * PI) };
            prop_assert!(m > lo && m <= hi + 1e-9, "{:?}: {m}", geom.kind());
        }
    }

    #[test]
    fn boundary_distance_is_symmetric_and_vanishes_on_the_diagonal(a in 0.0..(2.0 * PI), b in 0.0..(2.0 * PI)) {
        let g = DomainGeometry::disc();
        let (p, q) = (BoundaryPoint::from_angle(a), BoundaryPoint::from_angle(b));
        prop_assert!((g.boundary_distance(&p, &q) - g.boundary_distance(&q, &p)).abs() < 1e-15);
        prop_assert!(g.boundary_distance(&p, &p) < 1e-15);
        prop_assert!((g.boundary_distance(&p, &q) - 2.0 * ((a - b) / 2.0).sin().abs()).abs() < 1e-12);
    }
}
