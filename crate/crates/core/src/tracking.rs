//! Kalman tracking of a moving tag with a Brownian (random-walk) motion
//! model: position-only state, identity transition, `R = r² I`.
//!
//! Two measurement models are supported:
//!
//! - EKF: `h(x) = (d_i(x) - d_j(x))`, `H = J(x)`, optionally iterated.
//! - Linear KF: `h(x) = M x`, `z = f` from the linear estimator's system.
//!   `M` is built from the measurement itself, so `H` changes with every
//!   observation. This is not a textbook Kalman filter and its covariance is
//!   only a heuristic, but it is the model being reproduced.
//!
//! The correction is computed in information form,
//! `P⁺ = (P̂⁻¹ + HᵀH / r²)⁻¹`, `K = P⁺Hᵀ / r²`, which equals the usual gain
//! and keeps the work at 2×2 regardless of the number of anchor pairs.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TdoaError};
use crate::estimator::EstimatorKind;
use crate::geometry::{AnchorSet, Point};
use crate::linalg::{singular_values, Matrix, Vector, RANK_TOLERANCE};
use crate::linear::{build_system, solve_linear, LinearMode};
use crate::measurement::TdoaVector;
use crate::nonlinear::{jacobian, locate_gauss_newton, residual, GaussNewtonConfig};

pub const DEFAULT_R2: f64 = 0.5;
pub const DEFAULT_Q: f64 = 0.1;
pub const DEFAULT_INITIAL_VARIANCE: f64 = 10.0;
/// Covariance eigenvalues below `-PSD_TOLERANCE` count as a PSD violation.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Process noise added by each prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ProcessNoise {
    /// `Q = q qᵀ`: movement along the single direction `q`.
    OuterProduct { q: [f64; 2] },
    /// `Q = diag(q_x², q_y²)`: independent movement of `q` per dimension.
    Diagonal { q: [f64; 2] },
}

impl ProcessNoise {
    pub fn matrix(&self) -> Matrix2<f64> {
        match *self {
            ProcessNoise::OuterProduct { q } => {
                let v = Vector2::new(q[0], q[1]);
                v * v.transpose()
            }
            ProcessNoise::Diagonal { q } => Matrix2::new(q[0] * q[0], 0.0, 0.0, q[1] * q[1]),
        }
    }

    fn q(&self) -> [f64; 2] {
        match *self {
            ProcessNoise::OuterProduct { q } | ProcessNoise::Diagonal { q } => q,
        }
    }
}

impl Default for ProcessNoise {
    fn default() -> Self {
        ProcessNoise::Diagonal {
            q: [DEFAULT_Q, DEFAULT_Q],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    pub r2: f64,
    pub process: ProcessNoise,
    pub initial_variance: f64,
    /// Relinearisations per EKF update; 1 is the plain EKF.
    pub gn_iterations: usize,
    /// Start here instead of a standalone solve of the first measurement.
    pub initial_position: Option<Point>,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            r2: DEFAULT_R2,
            process: ProcessNoise::default(),
            initial_variance: DEFAULT_INITIAL_VARIANCE,
            gn_iterations: 1,
            initial_position: None,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r2 > 0.0) || !self.r2.is_finite() {
            return Err(TdoaError::invalid("r2 must be positive and finite"));
        }
        if self.process.q().iter().any(|q| !(*q >= 0.0) || !q.is_finite()) {
            return Err(TdoaError::invalid("q must be non-negative and finite"));
        }
        if !(self.initial_variance > 0.0) || !self.initial_variance.is_finite() {
            return Err(TdoaError::invalid("initial variance must be positive and finite"));
        }
        if self.gn_iterations == 0 {
            return Err(TdoaError::invalid("gn_iterations must be at least 1"));
        }
        if self.initial_position.is_some_and(|p| !p.is_finite()) {
            return Err(TdoaError::invalid("initial position must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerState {
    pub x: Point,
    pub p_cov: Matrix2<f64>,
    pub process: ProcessNoise,
    pub r2: f64,
}

impl TrackerState {
    pub fn new(x: Point, params: &TrackerParams) -> Result<Self> {
        params.validate()?;
        if !x.is_finite() {
            return Err(TdoaError::invalid("initial state must be finite"));
        }
        Ok(Self {
            x,
            p_cov: Matrix2::identity() * params.initial_variance,
            process: params.process,
            r2: params.r2,
        })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.p_cov)
    }

    pub fn is_psd(&self) -> bool {
        let p = &self.p_cov;
        p[(0, 1)] == p[(1, 0)] && self.min_eigenvalue() >= -PSD_TOLERANCE
    }
}

fn min_eigenvalue(p: &Matrix2<f64>) -> f64 {
    let half_trace = 0.5 * (p[(0, 0)] + p[(1, 1)]);
    let half_gap = 0.5 * (p[(0, 0)] - p[(1, 1)]);
    let off = 0.5 * (p[(0, 1)] + p[(1, 0)]);
    half_trace - half_gap.hypot(off)
}

fn symmetrize(p: Matrix2<f64>) -> Matrix2<f64> {
    (p + p.transpose()) * 0.5
}

/// Prediction with `A = I`: the state is unchanged and `P ← P + Q`.
pub fn kf_predict(state: &TrackerState) -> TrackerState {
    TrackerState {
        p_cov: symmetrize(state.p_cov + state.process.matrix()),
        ..*state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixStatus {
    Ok,
    /// Measurement matrix numerically rank deficient; the update was still
    /// applied, regularised by the prior.
    Degenerate,
    /// Linear system singular; prediction only.
    Singular,
    /// State within the guard radius of an anchor; prediction only.
    NearAnchor,
    /// Standalone initialisation failed; started from the anchor centroid.
    InitFallback,
}

impl FixStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FixStatus::Ok => "ok",
            FixStatus::Degenerate => "degenerate",
            FixStatus::Singular => "singular",
            FixStatus::NearAnchor => "near-anchor",
            FixStatus::InitFallback => "init-fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixQuality {
    pub sigma_min: f64,
    pub status: FixStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackFix {
    pub time_index: usize,
    pub estimate: Point,
    /// Row-major 2×2 covariance.
    pub covariance: [[f64; 2]; 2],
    pub innovation_norm: f64,
    pub quality: FixQuality,
}

impl TrackFix {
    fn from_state(time_index: usize, s: &TrackerState, innovation_norm: f64, quality: FixQuality) -> Self {
        let p = &s.p_cov;
        Self {
            time_index,
            estimate: s.x,
            covariance: [[p[(0, 0)], p[(0, 1)]], [p[(1, 0)], p[(1, 1)]]],
            innovation_norm,
            quality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub fixes: Vec<TrackFix>,
}

impl Trajectory {
    pub fn estimates(&self) -> Vec<Point> {
        self.fixes.iter().map(|f| f.estimate).collect()
    }

    pub fn len(&self) -> usize {
        self.fixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixes.is_empty()
    }
}

/// Gain-weighted correction with `R = r² I`. `innovation` is the
/// measurement-space residual about `x_lin`; returns `(x⁺, P⁺)`.
fn correct(
    prior: &TrackerState,
    x_lin: Point,
    h: &Matrix,
    innovation: &Vector,
) -> (Point, Matrix2<f64>) {
    let p = prior.p_cov;
    let ht_h = Matrix2::new(
        h.column(0).dot(&h.column(0)),
        h.column(0).dot(&h.column(1)),
        h.column(1).dot(&h.column(0)),
        h.column(1).dot(&h.column(1)),
    );
    let ht_y = Vector2::new(h.column(0).dot(innovation), h.column(1).dot(innovation));
    let post = match p.try_inverse() {
        Some(p_inv) => (symmetrize(p_inv) + ht_h / prior.r2)
            .try_inverse()
            .map(symmetrize),
        None => None,
    };
    let post = match post {
        Some(post) => post,
        None => return covariance_form(prior, x_lin, h, innovation),
    };
    // x⁺ = x̂ + K (z - h(x_lin) - H (x̂ - x_lin))
    let shift = Vector2::new(prior.x.x - x_lin.x, prior.x.y - x_lin.y);
    let corrected = ht_y - ht_h * shift;
    let dx = post * corrected / prior.r2;
    (Point::new(prior.x.x + dx[0], prior.x.y + dx[1]), post)
}

/// Textbook form, used when the prior covariance is not invertible.
fn covariance_form(prior: &TrackerState, x_lin: Point, h: &Matrix, innovation: &Vector) -> (Point, Matrix2<f64>) {
    let p = Matrix::from_iterator(2, 2, prior.p_cov.iter().copied());
    let m = h.nrows();
    let s = h * &p * h.transpose() + Matrix::identity(m, m) * prior.r2;
    let shift = Vector::from_vec(vec![prior.x.x - x_lin.x, prior.x.y - x_lin.y]);
    let y = innovation - h * shift;
    let chol = s.cholesky().expect("H P Hᵀ + r² I is positive definite");
    let k = (chol.solve(&(h * &p))).transpose();
    let dx = &k * y;
    let i_kh = Matrix::identity(2, 2) - &k * h;
    let post = &i_kh * &p * i_kh.transpose() + &k * k.transpose() * prior.r2;
    let post = symmetrize(Matrix2::new(post[(0, 0)], post[(0, 1)], post[(1, 0)], post[(1, 1)]));
    (Point::new(prior.x.x + dx[0], prior.x.y + dx[1]), post)
}

/// EKF correction. `state` is the predicted state. With `gn_iterations > 1`
/// the measurement is relinearised at each refreshed estimate (iterated EKF).
pub fn ekf_update(
    state: &TrackerState,
    anchors: &AnchorSet,
    dhat: &TdoaVector,
    gn_iterations: usize,
    time_index: usize,
) -> Result<(TrackerState, TrackFix)> {
    dhat.check_anchors(anchors)?;
    let hold = |status: FixStatus, innovation: f64| {
        let quality = FixQuality {
            sigma_min: f64::NAN,
            status,
        };
        (*state, TrackFix::from_state(time_index, state, innovation, quality))
    };
    let innovation0 = match residual(state.x, anchors, dhat) {
        Ok(r) => r.norm(),
        Err(TdoaError::NearAnchor { .. }) => return Ok(hold(FixStatus::NearAnchor, f64::NAN)),
        Err(e) => return Err(e),
    };
    let mut x_lin = state.x;
    let mut result = None;
    for _ in 0..gn_iterations.max(1) {
        let (h, r) = match (jacobian(x_lin, anchors), residual(x_lin, anchors, dhat)) {
            (Ok(h), Ok(r)) => (h, r),
            (Err(TdoaError::NearAnchor { .. }), _) | (_, Err(TdoaError::NearAnchor { .. })) => break,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let sigma_min = singular_values(&h).min;
        let (x_new, p_new) = correct(state, x_lin, &h, &(-r));
        result = Some((x_new, p_new, sigma_min, h));
        if !x_new.is_finite() || x_new.sub(x_lin).norm() <= 1e-12 {
            break;
        }
        x_lin = x_new;
    }
    let Some((x, p_cov, sigma_min, h)) = result else {
        return Ok(hold(FixStatus::NearAnchor, innovation0));
    };
    let status = if singular_values(&h).is_rank_deficient(RANK_TOLERANCE) {
        FixStatus::Degenerate
    } else {
        FixStatus::Ok
    };
    let next = TrackerState { x, p_cov, ..*state };
    let fix = TrackFix::from_state(time_index, &next, innovation0, FixQuality { sigma_min, status });
    Ok((next, fix))
}

/// Linear KF correction with `H = M`, `z = f` from the chosen linear
/// construction. A singular system leaves the predicted state in place.
pub fn kf_update_linear(
    state: &TrackerState,
    anchors: &AnchorSet,
    dhat: &TdoaVector,
    mode: LinearMode,
    time_index: usize,
) -> Result<(TrackerState, TrackFix)> {
    let system = build_system(anchors, dhat, mode)?;
    let sv = system.singular_values();
    let z = system.absolute_rhs();
    let x = Vector::from_vec(vec![state.x.x, state.x.y]);
    let innovation = &z - &system.m * x;
    if !sv.min.is_finite() || sv.is_rank_deficient(RANK_TOLERANCE) {
        let quality = FixQuality {
            sigma_min: sv.min,
            status: FixStatus::Singular,
        };
        return Ok((*state, TrackFix::from_state(time_index, state, innovation.norm(), quality)));
    }
    let (x, p_cov) = correct(state, state.x, &system.m, &innovation);
    let next = TrackerState { x, p_cov, ..*state };
    let quality = FixQuality {
        sigma_min: sv.min,
        status: FixStatus::Ok,
    };
    Ok((next, TrackFix::from_state(time_index, &next, innovation.norm(), quality)))
}

/// Track a stream of measurements: initialise, then predict and correct once
/// per measurement. Gauss-Newton selects the EKF, linear kinds the linear KF.
///
/// Without `params.initial_position` the first measurement is solved
/// standalone (Gauss-Newton from the anchor centroid, or the linear solve)
/// and becomes fix 0 with covariance `initial_variance · I`.
pub fn track(
    stream: &[TdoaVector],
    anchors: &AnchorSet,
    kind: EstimatorKind,
    params: &TrackerParams,
) -> Result<Trajectory> {
    params.validate()?;
    if stream.is_empty() {
        return Err(TdoaError::invalid("measurement stream is empty"));
    }
    if anchors.len() < kind.min_anchors() {
        return Err(TdoaError::InsufficientAnchors {
            what: if kind.is_linear() { "linear tracking" } else { "EKF tracking" },
            required: kind.min_anchors(),
            got: anchors.len(),
        });
    }
    if let EstimatorKind::LinearCentral(c) = kind {
        if c >= anchors.len() {
            return Err(TdoaError::invalid(format!("central anchor {} out of range", c + 1)));
        }
    }
    for d in stream {
        d.check_anchors(anchors)?;
    }

    let mut fixes = Vec::with_capacity(stream.len());
    let (mut state, rest) = match params.initial_position {
        Some(p) => (TrackerState::new(p, params)?, stream),
        None => {
            let (p, quality) = initial_fix(anchors, &stream[0], kind);
            let state = TrackerState::new(p, params)?;
            fixes.push(TrackFix::from_state(0, &state, 0.0, quality));
            (state, &stream[1..])
        }
    };
    let offset = stream.len() - rest.len();
    for (k, dhat) in rest.iter().enumerate() {
        let predicted = kf_predict(&state);
        let (next, fix) = match kind.linear_mode() {
            Some(mode) => kf_update_linear(&predicted, anchors, dhat, mode, offset + k)?,
            None => ekf_update(&predicted, anchors, dhat, params.gn_iterations, offset + k)?,
        };
        debug_assert!(next.is_psd(), "covariance lost PSD: {:?}", next.p_cov);
        state = next;
        fixes.push(fix);
    }
    Ok(Trajectory { fixes })
}

fn initial_fix(anchors: &AnchorSet, dhat: &TdoaVector, kind: EstimatorKind) -> (Point, FixQuality) {
    let solved = match kind.linear_mode() {
        Some(mode) => build_system(anchors, dhat, mode)
            .and_then(|s| solve_linear(&s))
            .map(|f| (f.point, f.singular.min)),
        None => locate_gauss_newton(anchors, dhat, &GaussNewtonConfig::default())
            .map(|r| (r.estimate, r.jacobian_sigma_min)),
    };
    match solved {
        Ok((p, sigma_min)) if p.is_finite() => (
            p,
            FixQuality {
                sigma_min,
                status: FixStatus::Ok,
            },
        ),
        _ => (
            anchors.centroid(),
            FixQuality {
                sigma_min: f64::NAN,
                status: FixStatus::InitFallback,
            },
        ),
    }
}
