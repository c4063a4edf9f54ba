mod common;

use std::f64::consts::TAU;

use proptest::prelude::*;
use rand::RngExt;
use reactive_horizon::geometry::*;

use common::*;

const SAMPLES: usize = 10_000;
const BAND: f64 = 1e-6;

#[test]
fn containment_margin_agrees_with_sampling() {
    let mut r = rng(11);
    let mut positives = 0;
    for _ in 0..300 {
        let p = random_polygon(&mut r);
        let e = random_ellipse_for(&mut r, &p);
        let m = ellipsoid_in_polygon_margin(&e, &p);
        if m.abs() < BAND {
            continue;
        }
        let phase = r.random_range(0.0..TAU);
        assert_eq!(m > 0.0, sampled_contained(&e, &p, SAMPLES, phase), "margin {m}");
        positives += usize::from(m > 0.0);
    }
    assert!(positives > 10, "too few contained instances to be informative");
}

#[test]
fn separation_agrees_with_sampling() {
    let mut r = rng(12);
    let mut disjoint = 0;
    for _ in 0..300 {
        let p = random_polygon(&mut r);
        let e = random_ellipse_for(&mut r, &p);
        let s = ellipsoid_polygon_separation(&e, &p);
        if s.abs() < BAND {
            continue;
        }
        let phase = r.random_range(0.0..TAU);
        assert_eq!(s <= 0.0, sampled_intersects(&e, &p, SAMPLES, phase), "separation {s}");
        disjoint += usize::from(s > 0.0);
    }
    assert!(disjoint > 10);
}

#[test]
fn touching_configurations_sit_at_zero() {
    let sq = ConvexPolygon::rectangle(Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0)).unwrap();
    let inscribed = Ellipsoid::circle(Vec2::zeros(), 1.0).unwrap();
    assert!(ellipsoid_in_polygon_margin(&inscribed, &sq).abs() < 1e-12);
    let outside = Ellipsoid::circle(Vec2::new(2.5, 0.0), 1.5).unwrap();
    assert!(ellipsoid_polygon_separation(&outside, &sq).abs() < 1e-12);
}

#[test]
fn separation_inside_reports_depth() {
    let sq = ConvexPolygon::rectangle(Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0)).unwrap();
    let e = Ellipsoid::circle(Vec2::new(0.5, 0.0), 0.25).unwrap();
    // Center 0.5 deep in metres is 2 in unit-ball coordinates.
    assert!((ellipsoid_polygon_separation(&e, &sq) - (-1.0 - 2.0)).abs() < 1e-12);
}

fn arb_ellipse() -> impl Strategy<Value = Ellipsoid> {
    (-1.5..1.5f64, -1.5..1.5f64, 0.05..0.8f64, 0.05..0.8f64, 0.0..TAU).prop_map(|(x, y, a, b, th)| {
        Ellipsoid::new(Vec2::new(x, y), rotation(th) * Mat2::from_diagonal(&Vec2::new(a, b))).unwrap()
    })
}

fn arb_polygon() -> impl Strategy<Value = ConvexPolygon> {
    any::<u64>().prop_map(|s| random_polygon(&mut rng(s)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn margins_invariant_under_rigid_motion(
        e in arb_ellipse(), p in arb_polygon(), th in 0.0..TAU, tx in -3.0..3.0f64, ty in -3.0..3.0f64,
    ) {
        let t = Vec2::new(tx, ty);
        let moved = Ellipsoid::new(rotation(th) * e.center + t, rotation(th) * e.shape).unwrap();
        let q = p.transformed(th, t);
        prop_assert!((ellipsoid_in_polygon_margin(&e, &p) - ellipsoid_in_polygon_margin(&moved, &q)).abs() < 1e-9);
        prop_assert!((ellipsoid_polygon_separation(&e, &p) - ellipsoid_polygon_separation(&moved, &q)).abs() < 1e-9);
    }

    #[test]
    fn shape_sign_does_not_matter(e in arb_ellipse(), p in arb_polygon(), th in 0.0..TAU) {
        // S and S R describe the same set.
        let same = Ellipsoid::new(e.center, e.shape * rotation(th)).unwrap();
        prop_assert!((ellipsoid_in_polygon_margin(&e, &p) - ellipsoid_in_polygon_margin(&same, &p)).abs() < 1e-9);
        prop_assert!((ellipsoid_polygon_separation(&e, &p) - ellipsoid_polygon_separation(&same, &p)).abs() < 1e-9);
    }

    #[test]
    fn shrinking_never_reduces_containment(e in arb_ellipse(), p in arb_polygon(), k in 0.1..1.0f64) {
        let small = Ellipsoid::new(e.center, e.shape * k).unwrap();
        prop_assert!(ellipsoid_in_polygon_margin(&small, &p) >= ellipsoid_in_polygon_margin(&e, &p) - 1e-12);
    }

    #[test]
    fn contained_ellipse_is_not_separated(e in arb_ellipse(), p in arb_polygon()) {
        if ellipsoid_in_polygon_margin(&e, &p) > 0.0 {
            prop_assert!(ellipsoid_polygon_separation(&e, &p) < 0.0);
        }
    }

    #[test]
    fn point_distance_is_zero_exactly_inside(p in arb_polygon(), x in -3.0..3.0f64, y in -3.0..3.0f64) {
        let q = Vec2::new(x, y);
        let d = point_polygon_distance(q, &p);
        prop_assert!(d >= 0.0);
        if p.depth(q) > 1e-9 {
            prop_assert_eq!(d, 0.0);
        } else if p.depth(q) < -1e-9 {
            prop_assert!(d > 0.0);
            let near = p.boundary_samples(1e-3).iter().map(|b| (b - q).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(d <= near + 1e-12 && near - d < 1e-3);
        }
    }

    #[test]
    fn hull_contains_its_points(seed in any::<u64>(), n in 3usize..30) {
        let mut r = rng(seed);
        let pts: Vec<Vec2> = (0..n).map(|_| Vec2::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0))).collect();
        let hull = convex_hull(&pts);
        if let Ok(poly) = ConvexPolygon::from_vertices(&hull) {
            for q in &pts {
                prop_assert!(poly.depth(*q) >= -1e-9);
            }
        }
    }

    #[test]
    fn mvee_contains_its_points(seed in any::<u64>(), n in 3usize..20) {
        let mut r = rng(seed);
        let pts: Vec<Vec2> = (0..n).map(|_| Vec2::new(r.random_range(-2.0..2.0), r.random_range(-1.0..1.0))).collect();
        if let Ok(e) = minimum_enclosing_ellipsoid(&pts, 1e-7) {
            for q in &pts {
                prop_assert!(e.normalized_radius(*q) <= 1.0 + 1e-5);
            }
        }
    }

    #[test]
    fn unit_ball_map_sends_boundary_to_circle(e in arb_ellipse(), a in 0.0..TAU) {
        let m = unit_ball_map(&e).unwrap();
        prop_assert!((m.apply(e.boundary_point(a)).norm() - 1.0).abs() < 1e-9);
        prop_assert!(m.apply(e.center).norm() < 1e-9);
    }
}
