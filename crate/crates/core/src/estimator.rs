//! One entry point over the linear and Gauss-Newton estimators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, TdoaError};
use crate::geometry::{AnchorSet, Point};
use crate::linear::{locate_linear, LinearMode};
use crate::measurement::TdoaVector;
use crate::nonlinear::{locate_gauss_newton, GaussNewtonConfig};

/// Estimator selection. Text form: `linear-central:<k>` (1-based anchor
/// index), `linear-symmetric`, `gauss-newton`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    /// Central-anchor linear estimator, 0-based anchor index.
    LinearCentral(usize),
    LinearSymmetric,
    GaussNewton,
}

impl EstimatorKind {
    pub fn is_linear(self) -> bool {
        !matches!(self, EstimatorKind::GaussNewton)
    }

    pub fn linear_mode(self) -> Option<LinearMode> {
        match self {
            EstimatorKind::LinearCentral(c) => Some(LinearMode::Central(c)),
            EstimatorKind::LinearSymmetric => Some(LinearMode::Symmetric),
            EstimatorKind::GaussNewton => None,
        }
    }

    pub fn min_anchors(self) -> usize {
        if self.is_linear() {
            4
        } else {
            3
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::LinearCentral(c) => write!(f, "linear-central:{}", c + 1),
            EstimatorKind::LinearSymmetric => f.write_str("linear-symmetric"),
            EstimatorKind::GaussNewton => f.write_str("gauss-newton"),
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = TdoaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-symmetric" => return Ok(EstimatorKind::LinearSymmetric),
            "gauss-newton" => return Ok(EstimatorKind::GaussNewton),
            _ => {}
        }
        let k = s
            .strip_prefix("linear-central:")
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .ok_or_else(|| {
                TdoaError::invalid(format!(
                    "unknown estimator '{s}' (expected linear-central:<k>, linear-symmetric or gauss-newton)"
                ))
            })?;
        Ok(EstimatorKind::LinearCentral(k - 1))
    }
}

impl Serialize for EstimatorKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EstimatorKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixDiagnostics {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub cond: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fix {
    pub point: Point,
    pub diagnostics: FixDiagnostics,
}

impl Fix {
    /// False only for a Gauss-Newton run that hit its iteration budget.
    pub fn converged(&self) -> bool {
        self.diagnostics.converged.unwrap_or(true)
    }
}

/// Locate the tag with the chosen estimator. `initial_guess` only affects
/// Gauss-Newton (default start: anchor centroid).
///
/// For Gauss-Newton the singular values reported are those of the Jacobian at
/// the final iterate.
pub fn locate(
    anchors: &AnchorSet,
    dhat: &TdoaVector,
    kind: EstimatorKind,
    initial_guess: Option<Point>,
) -> Result<Fix> {
    let config = GaussNewtonConfig {
        initial_guess,
        ..GaussNewtonConfig::default()
    };
    locate_with_config(anchors, dhat, kind, &config)
}

/// [`locate`] with explicit Gauss-Newton settings (ignored by the linear
/// estimators).
pub fn locate_with_config(
    anchors: &AnchorSet,
    dhat: &TdoaVector,
    kind: EstimatorKind,
    config: &GaussNewtonConfig,
) -> Result<Fix> {
    if let EstimatorKind::LinearCentral(c) = kind {
        if c >= anchors.len() {
            return Err(TdoaError::invalid(format!(
                "central anchor {} out of range (have {} anchors)",
                c + 1,
                anchors.len()
            )));
        }
    }
    match kind.linear_mode() {
        Some(mode) => {
            let fix = locate_linear(anchors, dhat, mode)?;
            Ok(Fix {
                point: fix.point,
                diagnostics: FixDiagnostics {
                    sigma_min: fix.singular.min,
                    sigma_max: fix.singular.max,
                    cond: fix.cond(),
                    iterations: None,
                    converged: None,
                    residual_norm: None,
                },
            })
        }
        None => {
            let report = locate_gauss_newton(anchors, dhat, config)?;
            let j = crate::nonlinear::jacobian(report.estimate, anchors).ok();
            let sv = j.map(|j| crate::linalg::singular_values(&j));
            let (sigma_min, sigma_max) = sv.map_or((f64::NAN, f64::NAN), |s| (s.min, s.max));
            Ok(Fix {
                point: report.estimate,
                diagnostics: FixDiagnostics {
                    sigma_min,
                    sigma_max,
                    cond: sv.map_or(f64::NAN, |s| s.cond()),
                    iterations: Some(report.iterations),
                    converged: Some(report.converged),
                    residual_norm: Some(report.final_residual_norm),
                },
            })
        }
    }
}
