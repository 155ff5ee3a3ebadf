//! Closed-form linear TDoA estimators.
//!
//! Squaring `d_i = d̂_ik + d_k` and eliminating the unknown range `d_k` of a
//! reference anchor `k` between two such equations gives one linear equation
//! in `(x, y)` per triple `(i, j, k)`:
//!
//! ```text
//! 2(d̂_jk x_i + d̂_ki x_j + d̂_ij x_k) x + 2(d̂_jk y_i + d̂_ki y_j + d̂_ij y_k) y
//!     = d̂_jk r_i² + d̂_ki r_j² + d̂_ij r_k² + d̂_ij d̂_jk d̂_ki
//! ```
//!
//! with `r_i = |p_i|`. The *central* construction fixes `k` and uses every
//! pair of the remaining anchors; the *symmetric* construction uses every
//! triple and needs no reference anchor.
//!
//! Both constructions work in a shifted frame (central anchor, resp. anchor
//! centroid, at the origin). For consistent range differences the matrix is
//! unchanged by the shift; only the right-hand side is better scaled.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TdoaError};
use crate::geometry::{pair_count, triples, AnchorSet, Point};
use crate::linalg::{least_squares_with_diagnostics, singular_values, Matrix, SingularValues, Vector};
use crate::measurement::TdoaVector;

/// Which linear construction to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearMode {
    /// Reference anchor at this (0-based) index.
    Central(usize),
    Symmetric,
}

/// Which anchors generated a row of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSource {
    Pair(usize, usize),
    Triple(usize, usize, usize),
}

/// `M p = f` in a frame whose origin is `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub m: Matrix,
    pub f: Vector,
    pub rows: Vec<RowSource>,
    /// Rows divided by `2 r_i r_j` (central construction only).
    pub normalized: bool,
    /// Solutions of the system are relative to this point.
    pub origin: Point,
    pub mode: LinearMode,
}

impl LinearSystem {
    pub fn row_count(&self) -> usize {
        self.m.nrows()
    }

    pub fn singular_values(&self) -> SingularValues {
        singular_values(&self.m)
    }

    /// Measurement form with the origin folded back in: `M p = f + M o`.
    pub fn absolute_rhs(&self) -> Vector {
        let o = DVector::from_vec(vec![self.origin.x, self.origin.y]);
        &self.f + &self.m * o
    }
}

/// Estimate plus the conditioning of the system that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFix {
    pub point: Point,
    pub singular: SingularValues,
}

impl LinearFix {
    pub fn cond(&self) -> f64 {
        self.singular.cond()
    }
}

fn check_inputs(anchors: &AnchorSet, dhat: &TdoaVector) -> Result<()> {
    if anchors.len() < 4 {
        return Err(TdoaError::InsufficientAnchors {
            what: "linear estimator",
            required: 4,
            got: anchors.len(),
        });
    }
    dhat.check_anchors(anchors)
}

fn squared_norm(p: Point) -> f64 {
    p.x * p.x + p.y * p.y
}

/// One row per pair `(i, j)` of non-central anchors, using `central` as the
/// reference. Coordinates are shifted so the central anchor is the origin.
pub fn build_system_central(anchors: &AnchorSet, central: usize, dhat: &TdoaVector) -> Result<LinearSystem> {
    central_system(anchors, central, dhat, false)
}

/// [`build_system_central`] with every row divided by `2 r_i r_j`. This is
/// the scaling under which the condition number of `M` tracks `1 / kappa`.
pub fn build_system_central_normalized(
    anchors: &AnchorSet,
    central: usize,
    dhat: &TdoaVector,
) -> Result<LinearSystem> {
    central_system(anchors, central, dhat, true)
}

fn central_system(anchors: &AnchorSet, central: usize, dhat: &TdoaVector, normalized: bool) -> Result<LinearSystem> {
    check_inputs(anchors, dhat)?;
    if central >= anchors.len() {
        return Err(TdoaError::invalid(format!(
            "central anchor {} out of range for {} anchors",
            central + 1,
            anchors.len()
        )));
    }
    let origin = anchors.get(central);
    let local: Vec<Point> = anchors.points().iter().map(|p| p.sub(origin)).collect();
    let others: Vec<usize> = (0..anchors.len()).filter(|&i| i != central).collect();

    let rows = pair_count(others.len());
    let mut m = DMatrix::zeros(rows, 2);
    let mut f = DVector::zeros(rows);
    let mut sources = Vec::with_capacity(rows);
    let mut k = 0;
    for (a, &i) in others.iter().enumerate() {
        for &j in &others[a + 1..] {
            let di0 = dhat.diff(i, central);
            let dj0 = dhat.diff(j, central);
            let dji = dhat.diff(j, i);
            let (pi, pj) = (local[i], local[j]);
            let (ri2, rj2) = (squared_norm(pi), squared_norm(pj));
            let mut ax = 2.0 * (dj0 * pi.x - di0 * pj.x);
            let mut by = 2.0 * (dj0 * pi.y - di0 * pj.y);
            let mut rhs = dj0 * ri2 - di0 * rj2 + di0 * dj0 * dji;
            if normalized {
                let scale = 2.0 * ri2.sqrt() * rj2.sqrt();
                ax /= scale;
                by /= scale;
                rhs /= scale;
            }
            m[(k, 0)] = ax;
            m[(k, 1)] = by;
            f[k] = rhs;
            sources.push(RowSource::Pair(i, j));
            k += 1;
        }
    }
    Ok(LinearSystem {
        m,
        f,
        rows: sources,
        normalized,
        origin,
        mode: LinearMode::Central(central),
    })
}

/// One row per unordered triple `(i, j, k)` of anchors.
pub fn build_system_symmetric(anchors: &AnchorSet, dhat: &TdoaVector) -> Result<LinearSystem> {
    check_inputs(anchors, dhat)?;
    let n = anchors.len();
    let origin = anchors.centroid();
    let local: Vec<Point> = anchors.points().iter().map(|p| p.sub(origin)).collect();
    let rows = n * (n - 1) * (n - 2) / 6;
    let mut m = DMatrix::zeros(rows, 2);
    let mut f = DVector::zeros(rows);
    let mut sources = Vec::with_capacity(rows);
    for (row, (i, j, k)) in triples(n).enumerate() {
        let (djk, dki, dij) = (dhat.diff(j, k), dhat.diff(k, i), dhat.diff(i, j));
        let (pi, pj, pk) = (local[i], local[j], local[k]);
        m[(row, 0)] = 2.0 * (djk * pi.x + dki * pj.x + dij * pk.x);
        m[(row, 1)] = 2.0 * (djk * pi.y + dki * pj.y + dij * pk.y);
        f[row] = djk * squared_norm(pi) + dki * squared_norm(pj) + dij * squared_norm(pk) + dij * djk * dki;
        sources.push(RowSource::Triple(i, j, k));
    }
    Ok(LinearSystem {
        m,
        f,
        rows: sources,
        normalized: false,
        origin,
        mode: LinearMode::Symmetric,
    })
}

pub fn build_system(anchors: &AnchorSet, dhat: &TdoaVector, mode: LinearMode) -> Result<LinearSystem> {
    match mode {
        LinearMode::Central(c) => build_system_central(anchors, c, dhat),
        LinearMode::Symmetric => build_system_symmetric(anchors, dhat),
    }
}

/// Least-squares solution of the system, shifted back to absolute
/// coordinates.
pub fn solve_linear(system: &LinearSystem) -> Result<LinearFix> {
    let (p, singular) = least_squares_with_diagnostics(&system.m, &system.f)?;
    Ok(LinearFix {
        point: Point::new(p[0] + system.origin.x, p[1] + system.origin.y),
        singular,
    })
}

pub fn locate_linear(anchors: &AnchorSet, dhat: &TdoaVector, mode: LinearMode) -> Result<LinearFix> {
    solve_linear(&build_system(anchors, dhat, mode)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::true_distance_differences;

    fn plus_layout() -> AnchorSet {
        AnchorSet::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(-1.0, 0.0),
            Point::new(0.0, -1.0),
        ])
        .unwrap()
    }

    fn table1() -> AnchorSet {
        AnchorSet::new(vec![
            Point::new(20.961, 68.941),
            Point::new(20.911, 63.929),
            Point::new(22.652, 66.441),
            Point::new(25.417, 66.461),
            Point::new(28.274, 63.910),
            Point::new(28.324, 68.961),
        ])
        .unwrap()
    }

    #[test]
    fn target_at_central_anchor_zeroes_rhs() {
        let anchors = plus_layout();
        let d = true_distance_differences(anchors.get(0), &anchors);
        let sys = build_system_central(&anchors, 0, &d).unwrap();
        assert!(sys.f.iter().all(|v| v.abs() < 1e-15));
        assert_eq!(sys.row_count(), 6);
        assert_eq!(sys.rows[0], RowSource::Pair(1, 2));
    }

    #[test]
    fn central_recovers_plus_layout_target() {
        let anchors = plus_layout();
        let target = Point::new(0.2, 0.1);
        let d = true_distance_differences(target, &anchors);
        let fix = locate_linear(&anchors, &d, LinearMode::Central(0)).unwrap();
        assert!((fix.point.x - 0.2).abs() < 1e-9 && (fix.point.y - 0.1).abs() < 1e-9);
    }

    #[test]
    fn central_recovers_table1_triangular_target() {
        let anchors = table1();
        let target = Point::new(22.650, 66.667);
        let d = true_distance_differences(target, &anchors);
        let fix = locate_linear(&anchors, &d, LinearMode::Central(2)).unwrap();
        assert!((fix.point.x - target.x).hypot(fix.point.y - target.y) < 1e-6);
    }

    #[test]
    fn symmetric_row_count_and_recovery() {
        let four = AnchorSet::new(vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(0.0, 2.0),
            Point::new(2.5, 2.5),
        ])
        .unwrap();
        let d = true_distance_differences(Point::new(1.0, 0.7), &four);
        assert_eq!(build_system_symmetric(&four, &d).unwrap().row_count(), 4);

        let anchors = plus_layout();
        let target = Point::new(0.2, 0.1);
        let d = true_distance_differences(target, &anchors);
        let sys = build_system_symmetric(&anchors, &d).unwrap();
        assert_eq!(sys.row_count(), 10);
        let fix = solve_linear(&sys).unwrap();
        assert!((fix.point.x - 0.2).abs() < 1e-9 && (fix.point.y - 0.1).abs() < 1e-9);
    }

    #[test]
    fn equidistant_target_is_singular() {
        let square = AnchorSet::new(vec![
            Point::new(1.0, 1.0),
            Point::new(-1.0, 1.0),
            Point::new(-1.0, -1.0),
            Point::new(1.0, -1.0),
        ])
        .unwrap();
        let d = true_distance_differences(Point::new(0.0, 0.0), &square);
        let sys = build_system_symmetric(&square, &d).unwrap();
        assert!(sys.m.iter().all(|&v| v == 0.0));
        assert!(matches!(solve_linear(&sys), Err(TdoaError::SingularSystem { .. })));
    }

    #[test]
    fn constructions_agree_noise_free() {
        let anchors = table1();
        let target = Point::new(24.1, 66.0);
        let d = true_distance_differences(target, &anchors);
        let a = locate_linear(&anchors, &d, LinearMode::Symmetric).unwrap().point;
        for c in 0..anchors.len() {
            let b = locate_linear(&anchors, &d, LinearMode::Central(c)).unwrap().point;
            assert!((a.x - b.x).abs() < 1e-8 && (a.y - b.y).abs() < 1e-8, "central {c}");
        }
    }

    #[test]
    fn input_validation() {
        let three = AnchorSet::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        let d = true_distance_differences(Point::new(0.2, 0.2), &three);
        assert!(build_system_symmetric(&three, &d).is_err());
        assert!(build_system_central(&three, 0, &d).is_err());

        let anchors = plus_layout();
        let d = true_distance_differences(Point::new(0.2, 0.2), &anchors);
        assert!(matches!(
            build_system_central(&anchors, 5, &d),
            Err(TdoaError::InvalidArgument(_))
        ));
        let wrong = true_distance_differences(Point::new(0.2, 0.2), &three);
        assert!(build_system_symmetric(&anchors, &wrong).is_err());
    }

    #[test]
    fn normalized_rows_at_center_are_unit_direction_differences() {
        let anchors = plus_layout();
        let d = true_distance_differences(anchors.get(0), &anchors);
        let sys = build_system_central_normalized(&anchors, 0, &d).unwrap();
        // row (1,2): u_1 - u_2 = (1,0) - (0,1)
        assert!((sys.m[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((sys.m[(0, 1)] + 1.0).abs() < 1e-15);
        assert!(sys.normalized);
    }
}
