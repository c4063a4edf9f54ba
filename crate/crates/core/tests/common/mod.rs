//! Shared generators and sampling oracles for the integration tests.
#![allow(dead_code)]

use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reactive_horizon::geometry::{convex_hull, rotation, ConvexPolygon, Ellipsoid, Mat2, Vec2};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Convex hull of 3 to 8 points in a disc around a random center.
pub fn random_polygon(r: &mut ChaCha8Rng) -> ConvexPolygon {
    loop {
        let c = Vec2::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let n = r.random_range(3..=8);
        let pts: Vec<Vec2> = (0..n)
            .map(|_| {
                let a = r.random_range(0.0..TAU);
                let d = r.random_range(0.2..1.5);
                c + Vec2::new(a.cos(), a.sin()) * d
            })
            .collect();
        if let Ok(p) = ConvexPolygon::from_vertices(&convex_hull(&pts)) {
            if p.area() > 0.05 {
                return p;
            }
        }
    }
}

/// Ellipse with random orientation and semi-axes in [0.05, 0.8].
pub fn random_ellipse(r: &mut ChaCha8Rng) -> Ellipsoid {
    let c = Vec2::new(r.random_range(-1.5..1.5), r.random_range(-1.5..1.5));
    let a = r.random_range(0.05..0.8);
    let b = r.random_range(0.05..0.8);
    let s = rotation(r.random_range(0.0..TAU)) * Mat2::from_diagonal(&Vec2::new(a, b));
    Ellipsoid::new(c, s).unwrap()
}

/// `n` boundary points at stratified angles starting from `phase`.
pub fn ellipse_boundary(e: &Ellipsoid, n: usize, phase: f64) -> impl Iterator<Item = Vec2> + '_ {
    (0..n).map(move |k| e.boundary_point(phase + TAU * k as f64 / n as f64))
}

/// Containment decided on `n` sampled boundary points of the ellipse.
pub fn sampled_contained(e: &Ellipsoid, p: &ConvexPolygon, n: usize, phase: f64) -> bool {
    ellipse_boundary(e, n, phase).all(|q| p.contains(q))
}

/// Intersection decided on samples of both boundaries.
pub fn sampled_intersects(e: &Ellipsoid, p: &ConvexPolygon, n: usize, phase: f64) -> bool {
    if p.contains(e.center) || ellipse_boundary(e, n, phase).any(|q| p.contains(q)) {
        return true;
    }
    let perimeter: f64 = {
        let v = p.vertices();
        (0..v.len()).map(|i| (v[(i + 1) % v.len()] - v[i]).norm()).sum()
    };
    let spacing = perimeter / n as f64;
    p.vertices().iter().any(|&q| e.contains(q)) || p.boundary_samples(spacing).iter().any(|&q| e.contains(q))
}

/// Ellipse placed near the centroid of `p` half of the time, so containment
/// and intersection cases both occur often.
pub fn random_ellipse_for(r: &mut ChaCha8Rng, p: &ConvexPolygon) -> Ellipsoid {
    let e = random_ellipse(r);
    if r.random_bool(0.5) {
        let off = Vec2::new(r.random_range(-0.3..0.3), r.random_range(-0.3..0.3));
        Ellipsoid::new(p.centroid() + off, e.shape * 0.6).unwrap()
    } else {
        e
    }
}
