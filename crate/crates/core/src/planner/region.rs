//! Convex inner approximation of the observed-free region around a point.

use std::f64::consts::PI;

use crate::geometry::{convex_hull, ConvexPolygon, Vec2};
use crate::sensor::BeliefMap;

const RAYS: usize = 32;
const MAX_SHRINK_ROUNDS: usize = 200;
const SHRINK: f64 = 0.85;

fn observed(belief: &BeliefMap, p: Vec2) -> bool {
    belief
        .observed_free
        .index_of(p)
        .is_some_and(|i| belief.observed_free.get(i))
        && !belief.in_known_obstacle(p)
}

/// A convex polygon around `from` whose touching cells are all observed
/// free, or `None` if `from` itself is not observed.
///
/// Rays are marched outwards until they leave observed space, then the
/// hull of their endpoints is shrunk ray by ray until it covers no
/// unobserved cell.
pub fn observed_region(belief: &BeliefMap, from: Vec2) -> Option<ConvexPolygon> {
    if !observed(belief, from) {
        return None;
    }
    let grid = &belief.observed_free;
    let step = 0.5 * grid.cell;
    let dirs: Vec<Vec2> = (0..RAYS)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / RAYS as f64;
            Vec2::new(a.cos(), a.sin())
        })
        .collect();
    let mut lengths: Vec<f64> = dirs
        .iter()
        .map(|d| {
            let mut len = 0.0;
            while observed(belief, from + d * (len + step)) {
                len += step;
            }
            len
        })
        .collect();

    for _ in 0..MAX_SHRINK_ROUNDS {
        let tips: Vec<Vec2> = dirs.iter().zip(&lengths).map(|(d, l)| from + d * *l).collect();
        let hull = convex_hull(&tips);
        let poly = ConvexPolygon::from_vertices(&hull).ok()?;
        let bad: Vec<Vec2> = grid
            .cells_touching(&poly)
            .into_iter()
            .filter(|&i| !grid.get(i) || belief.in_known_obstacle(grid.center(i)))
            .map(|i| grid.center(i))
            .collect();
        if bad.is_empty() {
            return (poly.area() > grid.cell * grid.cell).then_some(poly);
        }
        // Shrink the hull vertices whose edge spans each bad cell; rays
        // already inside the hull no longer move it.
        let on_hull: Vec<bool> = tips
            .iter()
            .map(|t| hull.iter().any(|h| (h - t).norm() <= 1e-12))
            .collect();
        let mut hit = vec![false; RAYS];
        for c in bad {
            let d = c - from;
            let a = d.y.atan2(d.x).rem_euclid(2.0 * PI) / (2.0 * PI) * RAYS as f64;
            let lo = (a.floor() as usize) % RAYS;
            let before = (0..RAYS).map(|s| (lo + RAYS - s) % RAYS).find(|&r| on_hull[r]);
            let after = (1..=RAYS).map(|s| (lo + s) % RAYS).find(|&r| on_hull[r]);
            for r in [Some(lo), Some((lo + 1) % RAYS), before, after].into_iter().flatten() {
                hit[r] = true;
            }
        }
        for (l, h) in lengths.iter_mut().zip(hit) {
            if h {
                *l *= SHRINK;
            }
        }
    }
    None
}
