//! Error metrics, the reference site and the Monte-Carlo harness.
//!
//! Reports are pure functions of `(scenario, seed)`. Two scenarios with the
//! same anchor count and seed see identical noise draws, which is how paired
//! layout comparisons are made.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TdoaError};
use crate::estimator::{locate, EstimatorKind};
use crate::geometry::{distance, AnchorSet, Point};
use crate::measurement::{NoiseModel, TdoaVector};
use crate::tracking::{track, TrackerParams};

pub const DEFAULT_SAMPLES: usize = 500;
pub const DEFAULT_STEPS: usize = 50;
pub const DEFAULT_BURN_IN: usize = 5;
/// Matches a sensor variance of 0.5 m².
pub const DEFAULT_SIGMA_D: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn root_mean_square(errors: impl ExactSizeIterator<Item = f64>) -> Result<f64> {
    let n = errors.len();
    if n == 0 {
        return Err(TdoaError::invalid("cannot compute RMSE of an empty list"));
    }
    Ok((errors.map(|e| e * e).sum::<f64>() / n as f64).sqrt())
}

/// RMSE of point estimates about a fixed truth.
pub fn rmse_static(estimates: &[Point], truth: Point) -> Result<f64> {
    root_mean_square(estimates.iter().map(|&p| distance(p, truth)))
}

/// Distance from `p` to the closed segment `a`–`b`.
pub fn point_segment_distance(p: Point, seg: (Point, Point)) -> Result<f64> {
    let (a, b) = seg;
    let ab = b.sub(a);
    let len2 = ab.x * ab.x + ab.y * ab.y;
    if !(len2 > 0.0) {
        return Err(TdoaError::invalid("segment endpoints must be distinct"));
    }
    let ap = p.sub(a);
    let t = ((ap.x * ab.x + ap.y * ab.y) / len2).clamp(0.0, 1.0);
    Ok(distance(p, Point::new(a.x + t * ab.x, a.y + t * ab.y)))
}

/// RMSE of estimates about a segment.
pub fn rmse_track(estimates: &[Point], seg: (Point, Point)) -> Result<f64> {
    let d = estimates
        .iter()
        .map(|&p| point_segment_distance(p, seg))
        .collect::<Result<Vec<_>>>()?;
    root_mean_square(d.into_iter())
}

/// `steps` equally spaced points from `a` to `b` inclusive.
pub fn segment_points(seg: (Point, Point), steps: usize) -> Vec<Point> {
    let (a, b) = seg;
    let last = steps.saturating_sub(1).max(1) as f64;
    (0..steps)
        .map(|k| {
            let t = k as f64 / last;
            Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticScenario {
    pub name: String,
    pub deployment: String,
    pub anchors: AnchorSet,
    pub target: Point,
    pub sigma_d: f64,
    pub samples: usize,
    pub estimator: EstimatorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackScenario {
    pub name: String,
    pub deployment: String,
    pub anchors: AnchorSet,
    pub segment: (Point, Point),
    pub steps: usize,
    pub sigma_d: f64,
    pub estimator: EstimatorKind,
    pub tracker: TrackerParams,
    pub burn_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Scenario {
    Static(StaticScenario),
    Track(TrackScenario),
}

impl Scenario {
    pub fn name(&self) -> &str {
        match self {
            Scenario::Static(s) => &s.name,
            Scenario::Track(s) => &s.name,
        }
    }

    pub fn anchors(&self) -> &AnchorSet {
        match self {
            Scenario::Static(s) => &s.anchors,
            Scenario::Track(s) => &s.anchors,
        }
    }

    pub fn with_sigma(mut self, sigma_d: f64) -> Self {
        match &mut self {
            Scenario::Static(s) => s.sigma_d = sigma_d,
            Scenario::Track(s) => s.sigma_d = sigma_d,
        }
        self
    }

    pub fn run(&self, seed: u64) -> Result<ScenarioReport> {
        match self {
            Scenario::Static(s) => run_static_scenario(s, seed),
            Scenario::Track(s) => run_track_scenario(s, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub rmse: f64,
    /// Per-sample (static) or per-fix after burn-in (track) errors, metres.
    pub errors: Vec<f64>,
    /// Samples whose estimator returned an error; excluded from `errors`.
    pub failures: usize,
    /// Gauss-Newton runs that stopped on the iteration budget, or tracker
    /// fixes flagged with a non-ok status.
    pub non_converged: usize,
}

fn check_sigma(sigma_d: f64) -> Result<()> {
    if !(sigma_d >= 0.0) || !sigma_d.is_finite() {
        return Err(TdoaError::invalid("sigma_d must be finite and >= 0"));
    }
    Ok(())
}

pub fn run_static_scenario(s: &StaticScenario, seed: u64) -> Result<ScenarioReport> {
    if s.samples == 0 {
        return Err(TdoaError::invalid("samples must be >= 1"));
    }
    check_sigma(s.sigma_d)?;
    if !s.target.is_finite() {
        return Err(TdoaError::invalid("target must be finite"));
    }
    let mut errors = Vec::with_capacity(s.samples);
    let (mut failures, mut non_converged) = (0, 0);
    for dhat in simulate_static_stream(s, seed)? {
        match locate(&s.anchors, &dhat, s.estimator, None) {
            Ok(fix) => {
                if !fix.converged() {
                    non_converged += 1;
                }
                errors.push(distance(fix.point, s.target));
            }
            Err(TdoaError::InvalidArgument(msg)) => return Err(TdoaError::InvalidArgument(msg)),
            Err(_) => failures += 1,
        }
    }
    let rmse = root_mean_square(errors.iter().copied()).unwrap_or(f64::NAN);
    Ok(ScenarioReport {
        scenario: Scenario::Static(s.clone()),
        seed,
        rmse,
        errors,
        failures,
        non_converged,
    })
}

/// The noisy measurements a static scenario draws, in order.
pub fn simulate_static_stream(s: &StaticScenario, seed: u64) -> Result<Vec<TdoaVector>> {
    check_sigma(s.sigma_d)?;
    let sigmas = vec![s.sigma_d; s.anchors.len()];
    let mut sampler = NoiseModel::new(s.sigma_d, seed).sampler();
    Ok((0..s.samples).map(|_| sampler.tdoa(s.target, &s.anchors, &sigmas)).collect())
}

/// Noisy measurement stream along the scenario's segment.
pub fn simulate_track_stream(s: &TrackScenario, seed: u64) -> Result<Vec<TdoaVector>> {
    check_sigma(s.sigma_d)?;
    let sigmas = vec![s.sigma_d; s.anchors.len()];
    let mut sampler = NoiseModel::new(s.sigma_d, seed).sampler();
    Ok(segment_points(s.segment, s.steps)
        .into_iter()
        .map(|p| sampler.tdoa(p, &s.anchors, &sigmas))
        .collect())
}

pub fn run_track_scenario(s: &TrackScenario, seed: u64) -> Result<ScenarioReport> {
    if s.steps < 2 {
        return Err(TdoaError::invalid("steps must be >= 2"));
    }
    if s.burn_in >= s.steps {
        return Err(TdoaError::invalid("burn-in must be shorter than the track"));
    }
    point_segment_distance(s.segment.0, s.segment)?;
    let stream = simulate_track_stream(s, seed)?;
    let trajectory = track(&stream, &s.anchors, s.estimator, &s.tracker)?;
    let kept = &trajectory.fixes[s.burn_in..];
    let errors = kept
        .iter()
        .map(|f| point_segment_distance(f.estimate, s.segment))
        .collect::<Result<Vec<_>>>()?;
    let non_converged = kept
        .iter()
        .filter(|f| f.quality.status != crate::tracking::FixStatus::Ok)
        .count();
    Ok(ScenarioReport {
        scenario: Scenario::Track(s.clone()),
        seed,
        rmse: root_mean_square(errors.iter().copied())?,
        errors,
        failures: 0,
        non_converged,
    })
}

/// Seed for a scenario within a batch: FNV-1a of the name mixed with the
/// batch seed, so concurrent runs get independent streams.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Run several scenarios in parallel, each with `derive_seed(seed, name)`.
/// Output order follows input order.
pub fn run_batch(scenarios: &[Scenario], seed: u64) -> Vec<Result<ScenarioReport>> {
    scenarios
        .par_iter()
        .map(|s| s.run(derive_seed(seed, s.name())))
        .collect()
}

/// Run several scenarios in parallel on the same seed, so scenarios with the
/// same anchor count see identical noise draws. Output order follows input
/// order.
pub fn run_paired(scenarios: &[Scenario], seed: u64) -> Vec<Result<ScenarioReport>> {
    scenarios.par_iter().map(|s| s.run(seed)).collect()
}

/// The six anchors of the reference site, labelled `A1`..`A6`.
pub fn reference_site() -> AnchorSet {
    let pts = [
        (20.961, 68.941),
        (20.911, 63.929),
        (22.652, 66.441),
        (25.417, 66.461),
        (28.274, 63.910),
        (28.324, 68.961),
    ];
    AnchorSet::with_labels(
        pts.iter().map(|&p| p.into()).collect(),
        (1..=6).map(|k| Some(format!("A{k}"))).collect(),
    )
    .expect("reference site is valid")
}

/// Four outer corners of the reference site: anchors 1, 2, 5, 6.
pub fn rectangular_deployment() -> AnchorSet {
    reference_site().subset(&[0, 1, 4, 5]).expect("valid subset")
}

/// Corners 1, 2, 6 plus the interior anchor 3 (third in the subset).
pub fn triangular_deployment() -> AnchorSet {
    reference_site().subset(&[0, 1, 2, 5]).expect("valid subset")
}

pub const RECTANGULAR_TARGET: Point = Point { x: 24.715, y: 66.554 };
pub const TRIANGULAR_TARGET: Point = Point { x: 22.650, y: 66.667 };
pub const RECTANGULAR_SEGMENT: (Point, Point) = (Point { x: 22.11, y: 68.0 }, Point { x: 22.11, y: 64.75 });
pub const TRIANGULAR_SEGMENT: (Point, Point) = (Point { x: 22.03, y: 64.2 }, Point { x: 22.03, y: 68.4 });

/// Static and tracking scenarios for both deployments and both estimator
/// families, named `static-<deployment>-<linear|nonlinear>` and
/// `track-<deployment>-<linear|nonlinear>`.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let deployments = [
        ("rectangular", rectangular_deployment(), RECTANGULAR_TARGET, RECTANGULAR_SEGMENT),
        ("triangular", triangular_deployment(), TRIANGULAR_TARGET, TRIANGULAR_SEGMENT),
    ];
    let estimators = [("linear", EstimatorKind::LinearSymmetric), ("nonlinear", EstimatorKind::GaussNewton)];
    let mut out = Vec::new();
    for (dep, anchors, target, _) in &deployments {
        for (family, kind) in estimators {
            out.push(Scenario::Static(StaticScenario {
                name: format!("static-{dep}-{family}"),
                deployment: dep.to_string(),
                anchors: anchors.clone(),
                target: *target,
                sigma_d: DEFAULT_SIGMA_D,
                samples: DEFAULT_SAMPLES,
                estimator: kind,
            }));
        }
    }
    for (dep, anchors, _, segment) in &deployments {
        for (family, kind) in estimators {
            out.push(Scenario::Track(TrackScenario {
                name: format!("track-{dep}-{family}"),
                deployment: dep.to_string(),
                anchors: anchors.clone(),
                segment: *segment,
                steps: DEFAULT_STEPS,
                sigma_d: DEFAULT_SIGMA_D,
                estimator: kind,
                tracker: TrackerParams::default(),
                burn_in: DEFAULT_BURN_IN,
            }));
        }
    }
    out
}

/// Look up a built-in scenario. `table4-*` and `table5-*` are accepted as
/// aliases of `static-*` and `track-*`.
pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    let canonical = if let Some(rest) = name.strip_prefix("table4-") {
        format!("static-{rest}")
    } else if let Some(rest) = name.strip_prefix("table5-") {
        format!("track-{rest}")
    } else {
        name.to_string()
    };
    builtin_scenarios().into_iter().find(|s| s.name() == canonical)
}
