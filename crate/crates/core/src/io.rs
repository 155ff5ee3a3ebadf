//! File and wire formats shared by the command-line tool and the service.
//!
//! - Anchors: `{"anchors": [{"x": .., "y": .., "label": ..}, ..]}`.
//! - TDoA CSV, detected by header: `pair_i,pair_j,d_ij_m` (1-based pairs,
//!   metres) or `anchor,timestamp_s` (1-based anchors, seconds).
//! - Heatmap CSV: `# bounds=..,res=..` header, then one line per grid row
//!   (`j = 0` first), `nan` for masked cells.
//! - Scenario files: see [`ScenarioFile`].
//!
//! Text writers round every number to [`SIGNIFICANT_DIGITS`] so outputs diff
//! cleanly across platforms.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dop::DopGrid;
use crate::error::{Result, TdoaError};
use crate::estimator::EstimatorKind;
use crate::evaluation::{
    Scenario, ScenarioReport, StaticScenario, TrackScenario, DEFAULT_BURN_IN, DEFAULT_SAMPLES, DEFAULT_SIGMA_D,
    DEFAULT_STEPS,
};
use crate::geometry::{pair_count, AnchorSet, PairIndex, Point};
use crate::measurement::{toa_to_tdoa, TdoaVector, ToaSample};
use crate::tracking::{ProcessNoise, TrackerParams, Trajectory, DEFAULT_INITIAL_VARIANCE, DEFAULT_Q, DEFAULT_R2};

pub const SIGNIFICANT_DIGITS: usize = 9;

/// Round to [`SIGNIFICANT_DIGITS`] significant digits. Non-finite values
/// pass through.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v)
        .parse()
        .expect("formatted float parses")
}

/// Text form of a number for CSV output.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{:?}", round_sig(v))
    }
}

/// Round every non-integer number in a JSON tree.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64 number"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with rounded numbers and a trailing newline.
pub fn to_json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(&round_json(v.clone())).expect("JSON values serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorsFile {
    pub anchors: AnchorSet,
}

pub fn parse_anchors_json(text: &str) -> Result<AnchorSet> {
    serde_json::from_str::<AnchorsFile>(text)
        .map(|f| f.anchors)
        .map_err(|e| TdoaError::invalid(format!("anchors JSON: {e}")))
}

pub fn anchors_to_json(anchors: &AnchorSet) -> Value {
    json!({ "anchors": anchors })
}

fn csv_records(text: &str) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| TdoaError::invalid(format!("CSV header: {e}")))?
        .iter()
        .map(str::to_ascii_lowercase)
        .collect();
    let rows = rdr
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| TdoaError::invalid(format!("CSV: {e}")))?;
    Ok((header, rows))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, line: usize) -> Result<T> {
    rec.get(k)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| TdoaError::invalid(format!("CSV row {line}: bad or missing column {}", k + 1)))
}

fn one_based(v: usize, n: usize, line: usize) -> Result<usize> {
    if v == 0 || v > n {
        return Err(TdoaError::invalid(format!(
            "CSV row {line}: anchor index {v} outside 1..={n}"
        )));
    }
    Ok(v - 1)
}

/// Parse a TDoA CSV for `n` anchors. Pair rows may come in any order and
/// `(j, i)` is accepted as `-d_ij`; every pair must appear exactly once.
pub fn parse_tdoa_csv(text: &str, n: usize) -> Result<TdoaVector> {
    let (header, rows) = csv_records(text)?;
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    match header.as_slice() {
        ["pair_i", "pair_j", "d_ij_m"] => {
            let index = PairIndex::new(n);
            let mut values = vec![None; pair_count(n)];
            for (k, rec) in rows.iter().enumerate() {
                let line = k + 2;
                let i = one_based(field(rec, 0, line)?, n, line)?;
                let j = one_based(field(rec, 1, line)?, n, line)?;
                let d: f64 = field(rec, 2, line)?;
                let (row, d) = match (index.index_of(i, j), index.index_of(j, i)) {
                    (Some(r), _) => (r, d),
                    (None, Some(r)) => (r, -d),
                    _ => return Err(TdoaError::invalid(format!("CSV row {line}: pair ({}, {}) is not a pair", i + 1, j + 1))),
                };
                if values[row].replace(d).is_some() {
                    return Err(TdoaError::invalid(format!("CSV row {line}: pair ({}, {}) repeated", i + 1, j + 1)));
                }
            }
            let values = values
                .into_iter()
                .enumerate()
                .map(|(r, v)| {
                    v.ok_or_else(|| {
                        let (i, j) = index.pair(r);
                        TdoaError::invalid(format!("TDoA CSV is missing pair ({}, {})", i + 1, j + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            TdoaVector::new(n, values)
        }
        ["anchor", "timestamp_s"] => {
            let mut stamps = vec![None; n];
            for (k, rec) in rows.iter().enumerate() {
                let line = k + 2;
                let i = one_based(field(rec, 0, line)?, n, line)?;
                let t: f64 = field(rec, 1, line)?;
                if stamps[i].replace(t).is_some() {
                    return Err(TdoaError::invalid(format!("CSV row {line}: anchor {} repeated", i + 1)));
                }
            }
            let stamps = stamps
                .into_iter()
                .enumerate()
                .map(|(i, t)| t.ok_or_else(|| TdoaError::invalid(format!("no timestamp for anchor {}", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            toa_to_tdoa(&ToaSample::from_timestamps(&stamps, vec![0.0; n])?)
        }
        _ => Err(TdoaError::invalid(format!(
            "unrecognised TDoA CSV header '{}' (expected pair_i,pair_j,d_ij_m or anchor,timestamp_s)",
            header.join(",")
        ))),
    }
}

pub fn tdoa_to_csv(d: &TdoaVector) -> String {
    let mut out = String::from("pair_i,pair_j,d_ij_m\n");
    for (&(i, j), v) in PairIndex::new(d.n()).rows().iter().zip(d.values()) {
        out.push_str(&format!("{},{},{}\n", i + 1, j + 1, format_number(*v)));
    }
    out
}

pub fn grid_to_csv(grid: &DopGrid) -> String {
    let s = &grid.spec;
    let mut out = format!(
        "# bounds={},{},{},{},res={},{},kind={}",
        format_number(s.x_min),
        format_number(s.x_max),
        format_number(s.y_min),
        format_number(s.y_max),
        s.nx,
        s.ny,
        grid.kind
    );
    if let Some(c) = grid.central {
        out.push_str(&format!(",central={}", c + 1));
    }
    out.push('\n');
    for row in grid.values.chunks(s.nx) {
        let line: Vec<String> = row.iter().map(|&v| format_number(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Grid as JSON, full precision. Masked cells are `null`.
pub fn grid_to_json(grid: &DopGrid) -> Value {
    let s = &grid.spec;
    let values: Vec<Value> = grid
        .values
        .iter()
        .zip(&grid.mask)
        .map(|(&v, &m)| if m { Value::Null } else { json!(v) })
        .collect();
    json!({
        "bounds": { "x_min": s.x_min, "x_max": s.x_max, "y_min": s.y_min, "y_max": s.y_max },
        "nx": s.nx,
        "ny": s.ny,
        "kind": grid.kind,
        "central": grid.central.map(|c| c + 1),
        "values": values,
        "mask": grid.mask,
    })
}

pub fn trajectory_to_csv(t: &Trajectory) -> String {
    let mut out = String::from("time_index,x,y,cov_xx,cov_xy,cov_yy,innovation,quality\n");
    for f in &t.fixes {
        let c = f.covariance;
        let cells = [f.estimate.x, f.estimate.y, c[0][0], c[0][1], c[1][1], f.innovation_norm];
        let nums: Vec<String> = cells.iter().map(|&v| format_number(v)).collect();
        out.push_str(&format!("{},{},{}\n", f.time_index, nums.join(","), f.quality.status.as_str()));
    }
    out
}

pub fn trajectory_to_json(t: &Trajectory) -> Value {
    serde_json::to_value(t).expect("trajectory serializes")
}

/// Tracker settings in scenario files. `q` is the per-step movement scale;
/// `q_model` picks `diagonal` (default, `Q = diag(q²)`) or `outer-product`
/// (`Q = q qᵀ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerSection {
    #[serde(default = "default_r2")]
    pub r2: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub q_model: QModel,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_gn_iterations")]
    pub gn_iterations: usize,
    #[serde(default = "default_initial_variance")]
    pub initial_variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QModel {
    #[default]
    Diagonal,
    OuterProduct,
}

fn default_r2() -> f64 {
    DEFAULT_R2
}
fn default_q() -> f64 {
    DEFAULT_Q
}
fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}
fn default_gn_iterations() -> usize {
    1
}
fn default_initial_variance() -> f64 {
    DEFAULT_INITIAL_VARIANCE
}
fn default_sigma() -> f64 {
    DEFAULT_SIGMA_D
}

impl Default for TrackerSection {
    fn default() -> Self {
        Self {
            r2: DEFAULT_R2,
            q: DEFAULT_Q,
            q_model: QModel::Diagonal,
            burn_in: DEFAULT_BURN_IN,
            gn_iterations: 1,
            initial_variance: DEFAULT_INITIAL_VARIANCE,
        }
    }
}

impl TrackerSection {
    fn params(&self) -> TrackerParams {
        let q = [self.q, self.q];
        TrackerParams {
            r2: self.r2,
            process: match self.q_model {
                QModel::Diagonal => ProcessNoise::Diagonal { q },
                QModel::OuterProduct => ProcessNoise::OuterProduct { q },
            },
            initial_variance: self.initial_variance,
            gn_iterations: self.gn_iterations,
            initial_position: None,
        }
    }

    fn from_params(p: &TrackerParams, burn_in: usize) -> Self {
        let (q_model, q) = match p.process {
            ProcessNoise::Diagonal { q } => (QModel::Diagonal, q),
            ProcessNoise::OuterProduct { q } => (QModel::OuterProduct, q),
        };
        Self {
            r2: p.r2,
            q: q[0],
            q_model,
            burn_in,
            gn_iterations: p.gn_iterations,
            initial_variance: p.initial_variance,
        }
    }
}

/// Scenario file. Exactly one of `target` (static) or `segment` (track) is
/// present; `samples` and `steps` default to 500 and 50.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub anchors: AnchorSet,
    #[serde(default)]
    pub deployment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<[Point; 2]>,
    #[serde(default = "default_sigma")]
    pub sigma_d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub estimator: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracker: Option<TrackerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        let name = self.name.unwrap_or_else(|| "scenario".into());
        match (self.target, self.segment) {
            (Some(target), None) => {
                if self.steps.is_some() || self.tracker.is_some() {
                    return Err(TdoaError::invalid("static scenario cannot have steps or tracker"));
                }
                Ok(Scenario::Static(StaticScenario {
                    name,
                    deployment: self.deployment,
                    anchors: self.anchors,
                    target,
                    sigma_d: self.sigma_d,
                    samples: self.samples.unwrap_or(DEFAULT_SAMPLES),
                    estimator: self.estimator,
                }))
            }
            (None, Some([a, b])) => {
                if self.samples.is_some() {
                    return Err(TdoaError::invalid("track scenario cannot have samples"));
                }
                let tracker = self.tracker.unwrap_or_default();
                Ok(Scenario::Track(TrackScenario {
                    name,
                    deployment: self.deployment,
                    anchors: self.anchors,
                    segment: (a, b),
                    steps: self.steps.unwrap_or(DEFAULT_STEPS),
                    sigma_d: self.sigma_d,
                    estimator: self.estimator,
                    tracker: tracker.params(),
                    burn_in: tracker.burn_in,
                }))
            }
            _ => Err(TdoaError::invalid("scenario needs exactly one of target or segment")),
        }
    }

    pub fn from_scenario(s: &Scenario, seed: Option<u64>) -> Self {
        match s {
            Scenario::Static(s) => Self {
                name: Some(s.name.clone()),
                anchors: s.anchors.clone(),
                deployment: s.deployment.clone(),
                target: Some(s.target),
                segment: None,
                sigma_d: s.sigma_d,
                samples: Some(s.samples),
                steps: None,
                estimator: s.estimator,
                tracker: None,
                seed,
            },
            Scenario::Track(s) => Self {
                name: Some(s.name.clone()),
                anchors: s.anchors.clone(),
                deployment: s.deployment.clone(),
                target: None,
                segment: Some([s.segment.0, s.segment.1]),
                sigma_d: s.sigma_d,
                samples: None,
                steps: Some(s.steps),
                estimator: s.estimator,
                tracker: Some(TrackerSection::from_params(&s.tracker, s.burn_in)),
                seed,
            },
        }
    }
}

/// Parse a scenario file; returns the scenario and the seed it names, if
/// any.
pub fn parse_scenario_json(text: &str) -> Result<(Scenario, Option<u64>)> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| TdoaError::invalid(format!("scenario JSON: {e}")))?;
    let seed = file.seed;
    Ok((file.into_scenario()?, seed))
}

pub fn report_to_json(r: &ScenarioReport) -> Value {
    json!({
        "scenario": ScenarioFile::from_scenario(&r.scenario, Some(r.seed)),
        "seed": r.seed,
        "rmse": r.rmse,
        "samples": r.errors.len(),
        "failures": r.failures,
        "non_converged": r.non_converged,
        "errors": r.errors,
    })
}

pub fn report_errors_csv(r: &ScenarioReport) -> String {
    let mut out = String::from("sample,error_m\n");
    for (k, e) in r.errors.iter().enumerate() {
        out.push_str(&format!("{},{}\n", k, format_number(*e)));
    }
    out
}
