//! Gauss-Newton estimation on the range-difference residual.
//!
//! Plain Gauss-Newton without damping or line search: each step solves
//! `J Δ ≈ -r` in the least-squares sense. Non-convergence is reported in the
//! [`SolveReport`], not treated as an error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TdoaError};
use crate::geometry::{distance, AnchorSet, PairIndex, Point};
use crate::linalg::{least_squares_with_diagnostics, singular_values, Matrix, Vector, RANK_TOLERANCE};
use crate::measurement::TdoaVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussNewtonConfig {
    /// Starting point; `None` means the anchor centroid.
    pub initial_guess: Option<Point>,
    /// Stop once the Euclidean step norm is at most this, metres.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Iterates closer than this to an anchor are rejected, metres.
    pub min_anchor_distance: f64,
}

impl Default for GaussNewtonConfig {
    fn default() -> Self {
        Self {
            initial_guess: None,
            tolerance: 1e-9,
            max_iterations: 100,
            min_anchor_distance: 1e-9,
        }
    }
}

impl GaussNewtonConfig {
    pub fn with_initial_guess(mut self, p: Point) -> Self {
        self.initial_guess = Some(p);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(TdoaError::invalid("tolerance must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(TdoaError::invalid("max_iterations must be >= 1"));
        }
        if !(self.min_anchor_distance >= 0.0) {
            return Err(TdoaError::invalid("min_anchor_distance must be >= 0"));
        }
        if self.initial_guess.is_some_and(|p| !p.is_finite()) {
            return Err(TdoaError::invalid("initial guess must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub estimate: Point,
    pub iterations: usize,
    pub final_step_norm: f64,
    pub final_residual_norm: f64,
    pub converged: bool,
    pub jacobian_sigma_min: f64,
}

fn guarded_ranges(p: Point, anchors: &AnchorSet, guard: f64) -> Result<Vec<f64>> {
    anchors
        .points()
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let d = distance(p, a);
            if d <= guard || d == 0.0 {
                Err(TdoaError::NearAnchor { anchor: i + 1, distance: d })
            } else {
                Ok(d)
            }
        })
        .collect()
}

/// `(d_i(p) - d_j(p)) - d̂_ij` in pair order.
pub fn residual(p: Point, anchors: &AnchorSet, dhat: &TdoaVector) -> Result<Vector> {
    residual_guarded(p, anchors, dhat, GaussNewtonConfig::default().min_anchor_distance)
}

fn residual_guarded(p: Point, anchors: &AnchorSet, dhat: &TdoaVector, guard: f64) -> Result<Vector> {
    dhat.check_anchors(anchors)?;
    let d = guarded_ranges(p, anchors, guard)?;
    let index = PairIndex::new(anchors.len());
    Ok(DVector::from_iterator(
        index.len(),
        index
            .rows()
            .iter()
            .zip(dhat.values())
            .map(|(&(i, j), dh)| (d[i] - d[j]) - dh),
    ))
}

/// Jacobian of the range differences: row `(i, j)` is `u_i - u_j` with
/// `u_i = (p - p_i) / d_i`.
pub fn jacobian(p: Point, anchors: &AnchorSet) -> Result<Matrix> {
    jacobian_guarded(p, anchors, GaussNewtonConfig::default().min_anchor_distance)
}

fn jacobian_guarded(p: Point, anchors: &AnchorSet, guard: f64) -> Result<Matrix> {
    let d = guarded_ranges(p, anchors, guard)?;
    let units: Vec<(f64, f64)> = anchors
        .points()
        .iter()
        .zip(&d)
        .map(|(a, di)| ((p.x - a.x) / di, (p.y - a.y) / di))
        .collect();
    let index = PairIndex::new(anchors.len());
    let mut j = DMatrix::zeros(index.len(), 2);
    for (k, &(a, b)) in index.rows().iter().enumerate() {
        j[(k, 0)] = units[a].0 - units[b].0;
        j[(k, 1)] = units[a].1 - units[b].1;
    }
    Ok(j)
}

/// Result of a single Gauss-Newton step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub delta: Point,
    pub residual_norm: f64,
    pub jacobian_sigma_min: f64,
}

/// `Δ = -(JᵀJ)⁻¹ Jᵀ r` at `p`, computed as a least-squares solve.
pub fn gauss_newton_step(p: Point, anchors: &AnchorSet, dhat: &TdoaVector) -> Result<Step> {
    step_guarded(p, anchors, dhat, GaussNewtonConfig::default().min_anchor_distance)
}

fn step_guarded(p: Point, anchors: &AnchorSet, dhat: &TdoaVector, guard: f64) -> Result<Step> {
    let r = residual_guarded(p, anchors, dhat, guard)?;
    let j = jacobian_guarded(p, anchors, guard)?;
    let (delta, sv) = match least_squares_with_diagnostics(&j, &(-&r)) {
        Ok(ok) => ok,
        Err(TdoaError::SingularSystem { sigma_min }) => {
            return Err(TdoaError::DegenerateGeometry { sigma_min })
        }
        Err(e) => return Err(e),
    };
    Ok(Step {
        delta: Point::new(delta[0], delta[1]),
        residual_norm: r.norm(),
        jacobian_sigma_min: sv.min,
    })
}

/// Iterate Gauss-Newton from the configured start until the step norm drops
/// to the tolerance or the iteration budget runs out.
pub fn locate_gauss_newton(anchors: &AnchorSet, dhat: &TdoaVector, config: &GaussNewtonConfig) -> Result<SolveReport> {
    config.validate()?;
    dhat.check_anchors(anchors)?;
    if anchors.len() < 3 {
        return Err(TdoaError::InsufficientAnchors {
            what: "Gauss-Newton",
            required: 3,
            got: anchors.len(),
        });
    }
    let guard = config.min_anchor_distance;
    let mut p = config.initial_guess.unwrap_or_else(|| anchors.centroid());
    let mut iterations = 0;
    let mut step_norm = f64::INFINITY;
    let mut converged = false;
    while iterations < config.max_iterations {
        let step = step_guarded(p, anchors, dhat, guard)?;
        p = p.translate(step.delta);
        iterations += 1;
        step_norm = step.delta.norm();
        if !p.is_finite() || !step_norm.is_finite() {
            break;
        }
        if step_norm <= config.tolerance {
            converged = true;
            break;
        }
    }
    let (final_residual_norm, jacobian_sigma_min) = if p.is_finite() {
        let r = residual_guarded(p, anchors, dhat, guard)?;
        let j = jacobian_guarded(p, anchors, guard)?;
        (r.norm(), singular_values(&j).min)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(SolveReport {
        estimate: p,
        iterations,
        final_step_norm: step_norm,
        final_residual_norm,
        converged,
        jacobian_sigma_min,
    })
}

/// Whether the Jacobian at `p` is numerically rank deficient.
pub fn is_degenerate_at(p: Point, anchors: &AnchorSet) -> Result<bool> {
    let j = jacobian(p, anchors)?;
    Ok(singular_values(&j).is_rank_deficient(RANK_TOLERANCE))
}
