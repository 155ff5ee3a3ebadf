//! Planar geometry, anchor sets and the canonical pair ordering.

use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, TdoaError};
use crate::measurement::TdoaVector;

/// A position in the plane, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn translate(&self, by: Point) -> Point {
        Point::new(self.x + by.x, self.y + by.y)
    }

    pub fn sub(&self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// Euclidean distance between two points.
pub fn distance(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// One anchor as written in anchor files: `{"x": .., "y": .., "label": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEntry {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// The known stations. Their order defines the pair index used by every
/// TDoA vector built against this set.
///
/// Serializes as a list of [`AnchorEntry`]; deserializing validates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Point>,
    labels: Vec<Option<String>>,
}

impl AnchorSet {
    pub fn new(anchors: Vec<Point>) -> Result<Self> {
        let labels = vec![None; anchors.len()];
        Self::with_labels(anchors, labels)
    }

    pub fn with_labels(anchors: Vec<Point>, labels: Vec<Option<String>>) -> Result<Self> {
        if anchors.len() < 2 {
            return Err(TdoaError::invalid(format!(
                "need at least 2 anchors, got {}",
                anchors.len()
            )));
        }
        if labels.len() != anchors.len() {
            return Err(TdoaError::invalid("label count does not match anchor count"));
        }
        if let Some(i) = anchors.iter().position(|p| !p.is_finite()) {
            return Err(TdoaError::invalid(format!("anchor {} has non-finite coordinates", i + 1)));
        }
        for (i, a) in anchors.iter().enumerate() {
            for (j, b) in anchors.iter().enumerate().skip(i + 1) {
                if a == b {
                    return Err(TdoaError::invalid(format!(
                        "anchors {} and {} coincide",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { anchors, labels })
    }

    pub fn from_entries(entries: Vec<AnchorEntry>) -> Result<Self> {
        let (points, labels) = entries
            .into_iter()
            .map(|e| (Point::new(e.x, e.y), e.label))
            .unzip();
        Self::with_labels(points, labels)
    }

    pub fn entries(&self) -> Vec<AnchorEntry> {
        self.anchors
            .iter()
            .zip(&self.labels)
            .map(|(p, l)| AnchorEntry {
                x: p.x,
                y: p.y,
                label: l.clone(),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.anchors
    }

    pub fn get(&self, i: usize) -> Point {
        self.anchors[i]
    }

    pub fn labels(&self) -> &[Option<String>] {
        &self.labels
    }

    pub fn centroid(&self) -> Point {
        let n = self.anchors.len() as f64;
        let (sx, sy) = self
            .anchors
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / n, sy / n)
    }

    /// Every anchor shifted by `by`; labels are kept.
    pub fn translated(&self, by: Point) -> AnchorSet {
        AnchorSet {
            anchors: self.anchors.iter().map(|p| p.translate(by)).collect(),
            labels: self.labels.clone(),
        }
    }

    /// The anchors at `indices` (in that order), as a new set.
    pub fn subset(&self, indices: &[usize]) -> Result<AnchorSet> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(TdoaError::invalid(format!("anchor index {bad} out of range")));
        }
        AnchorSet::with_labels(
            indices.iter().map(|&i| self.anchors[i]).collect(),
            indices.iter().map(|&i| self.labels[i].clone()).collect(),
        )
    }

    /// Whether `p` lies in the closed convex hull of the anchors.
    pub fn hull_contains(&self, p: Point) -> bool {
        let hull = convex_hull(&self.anchors);
        if hull.len() < 3 {
            return false;
        }
        let scale = hull.iter().map(|q| q.norm()).fold(1.0, f64::max);
        hull.iter().zip(hull.iter().cycle().skip(1)).all(|(a, b)| {
            let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
            cross >= -1e-12 * scale * scale
        })
    }
}

impl Serialize for AnchorSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries().serialize(s)
    }
}

impl<'de> Deserialize<'de> for AnchorSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        AnchorSet::from_entries(Vec::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Counter-clockwise convex hull (monotone chain), without collinear points.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point, a: Point, b: Point| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Lexicographic enumeration of the unordered pairs `(i, j)`, `i < j`, of
/// `n` anchors: `(0,1), (0,2), …, (0,n-1), (1,2), …, (n-2,n-1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairIndex {
    n: usize,
    rows: Vec<(usize, usize)>,
}

impl PairIndex {
    pub fn new(n: usize) -> Self {
        let rows = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self { n, rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[(usize, usize)] {
        &self.rows
    }

    pub fn pair(&self, k: usize) -> (usize, usize) {
        self.rows[k]
    }

    /// Row of the pair `(i, j)`; requires `i < j < n`.
    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        if i >= j || j >= self.n {
            return None;
        }
        Some(i * (2 * self.n - i - 1) / 2 + (j - i - 1))
    }
}

/// Number of unordered pairs of `n` items.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Lexicographic unordered triples `(i, j, k)`, `i < j < k`.
pub fn triples(n: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).flat_map(move |j| (j + 1..n).map(move |k| (i, j, k))))
}

/// The `C(n,2) × n` operator mapping `v` to all pairwise differences
/// `v_i - v_j` in [`PairIndex`] order.
pub fn pair_difference_operator(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(TdoaError::invalid(format!(
            "pair difference operator needs n >= 2, got {n}"
        )));
    }
    let index = PairIndex::new(n);
    let mut t = DMatrix::zeros(index.len(), n);
    for (k, &(i, j)) in index.rows().iter().enumerate() {
        t[(k, i)] = 1.0;
        t[(k, j)] = -1.0;
    }
    Ok(t)
}

/// Noise-free range differences `d_i(p) - d_j(p)` in pair order.
pub fn true_distance_differences(target: Point, anchors: &AnchorSet) -> TdoaVector {
    let ranges: Vec<f64> = anchors.points().iter().map(|&a| distance(target, a)).collect();
    TdoaVector::from_per_anchor(&ranges)
}
