//! Dilution of precision for TDoA.
//!
//! `kappa(P)` is the smallest singular value of `T_n U`, where `U` stacks the
//! unit vectors `p_i / |p_i|`: it measures how widely the directions of a
//! point set are spread around the origin. Two facts make it the DoP
//! currency of this crate:
//!
//! - For the Gauss-Newton estimator the Jacobian at `p` is exactly `T_n U`
//!   with `U` the unit vectors `(p - p_i) / d_i`, so
//!   `sigma_min(J(p)) = kappa({p - p_i})`.
//! - For the linear estimator with rows scaled by `1 / (2 r_i r_j)`, the
//!   matrix equals `T_n U` of the non-central anchors when the tag sits on the
//!   central anchor, so `cond(M)` behaves like `1 / kappa` near it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TdoaError};
use crate::geometry::{pair_difference_operator, true_distance_differences, AnchorSet, Point};
use crate::linalg::{singular_values, Matrix, SingularValues};
use crate::linear::{build_system_central, build_system_central_normalized, build_system_symmetric};
use crate::nonlinear::GaussNewtonConfig;

/// Cells whose matrix has `sigma_min < MASK_TOLERANCE * sigma_max` are
/// treated as singular.
pub const MASK_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_RESOLUTION: usize = 200;

/// Unit directions of `points`, stacked as an `n × 2` matrix.
fn unit_rows(points: &[Point]) -> Result<Matrix> {
    let mut u = Matrix::zeros(points.len(), 2);
    for (k, p) in points.iter().enumerate() {
        let norm = p.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(TdoaError::invalid(format!("point {} has zero or non-finite norm", k + 1)));
        }
        u[(k, 0)] = p.x / norm;
        u[(k, 1)] = p.y / norm;
    }
    Ok(u)
}

/// Angular dispersion of a set of non-zero vectors.
pub fn kappa(points: &[Point]) -> Result<f64> {
    if points.len() < 2 {
        return Err(TdoaError::invalid("kappa needs at least 2 points"));
    }
    let t = pair_difference_operator(points.len())?;
    Ok(singular_values(&(t * unit_rows(points)?)).min)
}

/// Dispersion of the non-central anchors as seen from the central one.
pub fn central_kappa(anchors: &AnchorSet, central: usize) -> Result<f64> {
    if central >= anchors.len() {
        return Err(TdoaError::invalid("central anchor out of range"));
    }
    let c = anchors.get(central);
    let rel: Vec<Point> = anchors
        .points()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != central)
        .map(|(_, p)| p.sub(c))
        .collect();
    kappa(&rel)
}

fn masked_cond(sv: SingularValues) -> f64 {
    if !sv.min.is_finite() || !sv.max.is_finite() || sv.is_rank_deficient(MASK_TOLERANCE) {
        f64::INFINITY
    } else {
        sv.max / sv.min
    }
}

/// Condition number of the row-normalized central-anchor system built from
/// noise-free measurements at `target`. Infinite for singular systems.
pub fn linear_dop(anchors: &AnchorSet, central: usize, target: Point) -> Result<f64> {
    let d = true_distance_differences(target, anchors);
    let sys = build_system_central_normalized(anchors, central, &d)?;
    Ok(masked_cond(sys.singular_values()))
}

/// Like [`linear_dop`] but for the unscaled system the estimator actually
/// solves.
pub fn linear_dop_raw(anchors: &AnchorSet, central: usize, target: Point) -> Result<f64> {
    let d = true_distance_differences(target, anchors);
    let sys = build_system_central(anchors, central, &d)?;
    Ok(masked_cond(sys.singular_values()))
}

/// Condition number of the triple (central-free) system at `target`.
pub fn linear_dop_symmetric(anchors: &AnchorSet, target: Point) -> Result<f64> {
    let d = true_distance_differences(target, anchors);
    let sys = build_system_symmetric(anchors, &d)?;
    Ok(masked_cond(sys.singular_values()))
}

/// `kappa({target - p_i})`, equal to the smallest singular value of the
/// Gauss-Newton Jacobian at `target`. Larger is better.
pub fn nonlinear_dop(anchors: &AnchorSet, target: Point) -> Result<f64> {
    let guard = GaussNewtonConfig::default().min_anchor_distance;
    let rel: Vec<Point> = anchors.points().iter().map(|&a| target.sub(a)).collect();
    if let Some((i, p)) = rel.iter().enumerate().find(|(_, p)| p.norm() <= guard) {
        return Err(TdoaError::NearAnchor {
            anchor: i + 1,
            distance: p.norm(),
        });
    }
    kappa(&rel)
}

/// Rectangular grid of cells over `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        let g = Self {
            x_min,
            x_max,
            y_min,
            y_max,
            nx,
            ny,
        };
        g.validate()?;
        Ok(g)
    }

    /// The anchors' bounding box grown by `margin` on every side.
    pub fn covering(anchors: &AnchorSet, margin: f64, nx: usize, ny: usize) -> Result<Self> {
        let pts = anchors.points();
        let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&Point) -> f64| {
            pts.iter().map(pick).fold(init, f)
        };
        Self::new(
            fold(f64::min, f64::INFINITY, |p| p.x) - margin,
            fold(f64::max, f64::NEG_INFINITY, |p| p.x) + margin,
            fold(f64::min, f64::INFINITY, |p| p.y) - margin,
            fold(f64::max, f64::NEG_INFINITY, |p| p.y) + margin,
            nx,
            ny,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(TdoaError::invalid("grid bounds must be finite with min < max"));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(TdoaError::invalid("grid resolution must be at least 1×1"));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Centre of cell `(i, j)`, column `i` along x, row `j` along y.
    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        let dx = (self.x_max - self.x_min) / self.nx as f64;
        let dy = (self.y_max - self.y_min) / self.ny as f64;
        Point::new(
            self.x_min + (i as f64 + 0.5) * dx,
            self.y_min + (j as f64 + 0.5) * dy,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DopKind {
    /// `cond(M)` of the normalized central-anchor system; lower is better.
    LinearCond,
    /// `cond(M)` of the triple system; lower is better.
    LinearCondSymmetric,
    /// `kappa({p - p_i})`; higher is better.
    NonlinearKappa,
}

impl DopKind {
    pub fn higher_is_better(self) -> bool {
        matches!(self, DopKind::NonlinearKappa)
    }
}

impl std::fmt::Display for DopKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DopKind::LinearCond => "linear-cond",
            DopKind::LinearCondSymmetric => "linear-cond-symmetric",
            DopKind::NonlinearKappa => "nonlinear-kappa",
        })
    }
}

impl std::str::FromStr for DopKind {
    type Err = TdoaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-cond" => Ok(DopKind::LinearCond),
            "linear-cond-symmetric" => Ok(DopKind::LinearCondSymmetric),
            "nonlinear-kappa" => Ok(DopKind::NonlinearKappa),
            other => Err(TdoaError::invalid(format!("unknown DoP kind '{other}'"))),
        }
    }
}

/// DoP values on a grid, row-major (`index = j * nx + i`). Masked cells hold
/// `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct DopGrid {
    pub spec: GridSpec,
    pub kind: DopKind,
    pub central: Option<usize>,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl DopGrid {
    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        let k = j * self.spec.nx + i;
        (!self.mask[k]).then_some(self.values[k])
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Minimum and maximum over unmasked cells.
    pub fn finite_range(&self) -> Option<(f64, f64)> {
        self.unmasked().fold(None, |acc, (_, v)| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Cell with the best DoP: lowest condition number, or highest kappa.
    /// Returns `(i, j, value)`.
    pub fn best_cell(&self) -> Option<(usize, usize, f64)> {
        let better = |a: f64, b: f64| {
            if self.kind.higher_is_better() {
                a > b
            } else {
                a < b
            }
        };
        self.unmasked()
            .fold(None::<(usize, f64)>, |acc, (k, v)| match acc {
                Some((_, best)) if !better(v, best) => acc,
                _ => Some((k, v)),
            })
            .map(|(k, v)| (k % self.spec.nx, k / self.spec.nx, v))
    }

    fn unmasked(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter(|(_, (_, &m))| !m)
            .map(|(k, (&v, _))| (k, v))
    }
}

/// Evaluate the requested DoP at every cell centre.
pub fn dop_map(anchors: &AnchorSet, spec: &GridSpec, kind: DopKind, central: Option<usize>) -> Result<DopGrid> {
    spec.validate()?;
    match (kind, central) {
        (DopKind::LinearCond, None) => {
            return Err(TdoaError::invalid("linear-cond map needs a central anchor"))
        }
        (DopKind::LinearCond, Some(c)) if c >= anchors.len() => {
            return Err(TdoaError::invalid(format!("central anchor {} out of range", c + 1)))
        }
        (DopKind::LinearCond | DopKind::LinearCondSymmetric, _) if anchors.len() < 4 => {
            return Err(TdoaError::InsufficientAnchors {
                what: "linear DoP",
                required: 4,
                got: anchors.len(),
            })
        }
        _ => {}
    }
    let cell = |k: usize| -> f64 {
        let p = spec.cell_center(k % spec.nx, k / spec.nx);
        let v = match kind {
            DopKind::LinearCond => linear_dop(anchors, central.unwrap_or(0), p),
            DopKind::LinearCondSymmetric => linear_dop_symmetric(anchors, p),
            DopKind::NonlinearKappa => nonlinear_dop(anchors, p),
        };
        v.ok().filter(|v| v.is_finite()).unwrap_or(f64::NAN)
    };
    let values: Vec<f64> = (0..spec.cell_count()).into_par_iter().map(cell).collect();
    let mask = values.iter().map(|v| v.is_nan()).collect();
    Ok(DopGrid {
        spec: *spec,
        kind,
        central: if kind == DopKind::LinearCond { central } else { None },
        values,
        mask,
    })
}
