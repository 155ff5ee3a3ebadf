//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use proptest::prelude::*;
use tdoa_core::{AnchorSet, Point};

/// Smallest singular value of an `m × 2` matrix given as rows, from the
/// closed-form eigenvalues of its Gram matrix.
pub fn gram_sigma_min(rows: &[(f64, f64)]) -> f64 {
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for &(x, y) in rows {
        a += x * x;
        b += x * y;
        c += y * y;
    }
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mid - rad).max(0.0).sqrt()
}

pub fn gram_sigma_max(rows: &[(f64, f64)]) -> f64 {
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for &(x, y) in rows {
        a += x * x;
        b += x * y;
        c += y * y;
    }
    (0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt()).sqrt()
}

/// Unit-direction differences over every pair `i < j`, enumerated directly.
pub fn direction_differences(points: &[Point]) -> Vec<(f64, f64)> {
    let u: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let n = (p.x * p.x + p.y * p.y).sqrt();
            (p.x / n, p.y / n)
        })
        .collect();
    let mut rows = Vec::new();
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            rows.push((u[i].0 - u[j].0, u[i].1 - u[j].1));
        }
    }
    rows
}

pub fn kappa_oracle(points: &[Point]) -> f64 {
    gram_sigma_min(&direction_differences(points))
}

pub fn relative_to(p: Point, anchors: &AnchorSet) -> Vec<Point> {
    anchors.points().iter().map(|a| Point::new(p.x - a.x, p.y - a.y)).collect()
}

pub fn min_anchor_distance(p: Point, anchors: &AnchorSet) -> f64 {
    anchors
        .points()
        .iter()
        .map(|a| (p.x - a.x).hypot(p.y - a.y))
        .fold(f64::INFINITY, f64::min)
}

fn min_pairwise(points: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min((points[i].x - points[j].x).hypot(points[i].y - points[j].y));
        }
    }
    best
}

pub fn point_in(lo: f64, hi: f64) -> impl Strategy<Value = Point> {
    (lo..hi, lo..hi).prop_map(|(x, y)| Point::new(x, y))
}

/// `n` anchors in a 20 m box, at least 1 m apart.
pub fn layout(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = AnchorSet> {
    n.prop_flat_map(|n| prop::collection::vec(point_in(-10.0, 10.0), n))
        .prop_filter("anchors at least 1 m apart", |pts| min_pairwise(pts) >= 1.0)
        .prop_map(|pts| AnchorSet::new(pts).expect("distinct anchors"))
}

/// Convex combination of the anchors; always inside their hull.
pub fn in_hull(anchors: &AnchorSet, weights: &[f64]) -> Point {
    let total: f64 = weights.iter().take(anchors.len()).sum();
    let (mut x, mut y) = (0.0, 0.0);
    for (a, w) in anchors.points().iter().zip(weights) {
        x += w * a.x / total;
        y += w * a.y / total;
    }
    Point::new(x, y)
}

pub fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 8)
}

/// Layout plus an in-hull target at least 0.5 m from every anchor.
pub fn layout_and_target(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = (AnchorSet, Point)> {
    (layout(n), weights())
        .prop_map(|(a, w)| {
            let t = in_hull(&a, &w);
            (a, t)
        })
        .prop_filter("target away from anchors", |(a, t)| min_anchor_distance(*t, a) >= 0.5)
}
