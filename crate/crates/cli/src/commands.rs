use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde_json::{json, Value};
use tdoa_core::dop::{dop_map, DopGrid, GridSpec};
use tdoa_core::evaluation::{
    builtin_scenario, run_paired, segment_points, simulate_static_stream, simulate_track_stream, Scenario,
    ScenarioReport,
};
use tdoa_core::geometry::PairIndex;
use tdoa_core::io::{
    format_number, grid_to_csv, grid_to_json, parse_anchors_json, parse_scenario_json, parse_tdoa_csv,
    report_to_json, round_sig, to_json_text, trajectory_to_csv, trajectory_to_json, ScenarioFile,
};
use tdoa_core::nonlinear::GaussNewtonConfig;
use tdoa_core::tracking::{track, FixStatus};
use tdoa_core::{locate_with_config, AnchorSet};

use crate::{Cli, CliError, Command, DopMapArgs, EvalArgs, Format, LocateArgs, ScenarioArgs};

type CliResult<T = ()> = Result<T, CliError>;

/// (pipeline, estimator, rmse per deployment column).
type TableRow = (String, String, Vec<Option<f64>>);

pub fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Locate(a) => cmd_locate(cli, a),
        Command::DopMap(a) => cmd_dop_map(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Track(a) => cmd_track(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

/// Write to stdout; a closed pipe (`tdoa ... | head`) is not an error.
fn say(text: &str) -> CliResult {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::Input(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn load_anchors(path: &Path) -> CliResult<AnchorSet> {
    parse_anchors_json(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// A scenario file path, or a built-in name when no such file exists.
fn load_scenario(arg: &str, sigma: Option<f64>) -> CliResult<(Scenario, Option<u64>)> {
    let path = Path::new(arg);
    let (scenario, seed) = if path.exists() {
        parse_scenario_json(&read(path)?).map_err(|e| CliError::Input(format!("{arg}: {e}")))?
    } else {
        let s = builtin_scenario(arg).ok_or_else(|| {
            CliError::Input(format!("{arg}: no such file or built-in scenario"))
        })?;
        (s, None)
    };
    let scenario = match sigma {
        Some(s) => scenario.with_sigma(s),
        None => scenario,
    };
    Ok((scenario, seed))
}

fn pick_format(explicit: Option<Format>, out: Option<&Path>) -> Format {
    explicit.unwrap_or_else(|| match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Csv,
    })
}

/// Send the payload to `out`, or to stdout when no file is given. With a file
/// the summary goes to stdout instead (JSON under `--json`).
fn emit(cli: &Cli, out: Option<&Path>, payload: &str, summary: Value, human: String) -> CliResult {
    match out {
        None => say(payload)?,
        Some(path) => {
            write(path, payload)?;
            if cli.json {
                say(&to_json_text(&summary))?;
            } else {
                say(&format!("{human}\n"))?;
            }
        }
    }
    Ok(())
}

fn cmd_locate(cli: &Cli, a: &LocateArgs) -> CliResult {
    let anchors = load_anchors(&a.anchors)?;
    let dhat = parse_tdoa_csv(&read(&a.tdoa)?, anchors.len())
        .map_err(|e| CliError::Input(format!("{}: {e}", a.tdoa.display())))?;
    let config = GaussNewtonConfig {
        initial_guess: a.init,
        tolerance: a.tol,
        max_iterations: a.max_iter,
        ..GaussNewtonConfig::default()
    };
    config.validate()?;
    let fix = locate_with_config(&anchors, &dhat, a.estimator, &config)?;
    let body = json!({
        "x": fix.point.x,
        "y": fix.point.y,
        "estimator": a.estimator,
        "diagnostics": fix.diagnostics,
    });
    say(&to_json_text(&body))?;
    if cli.strict && !fix.converged() {
        return Err(CliError::NotConverged(format!(
            "Gauss-Newton did not converge in {} iterations",
            a.max_iter
        )));
    }
    Ok(())
}

fn grid_summary(grid: &DopGrid, out: &Path) -> (Value, String) {
    let best = grid.best_cell().map(|(i, j, v)| {
        let c = grid.spec.cell_center(i, j);
        json!({ "i": i, "j": j, "x": c.x, "y": c.y, "value": v })
    });
    let human = match &best {
        Some(b) => format!(
            "wrote {} ({}x{} {}, {} masked); best cell ({}, {}) = {}",
            out.display(),
            grid.spec.nx,
            grid.spec.ny,
            grid.kind,
            grid.masked_count(),
            format_number(b["x"].as_f64().unwrap_or(f64::NAN)),
            format_number(b["y"].as_f64().unwrap_or(f64::NAN)),
            format_number(b["value"].as_f64().unwrap_or(f64::NAN)),
        ),
        None => format!("wrote {} (every cell masked)", out.display()),
    };
    let summary = json!({
        "out": out.display().to_string(),
        "kind": grid.kind,
        "nx": grid.spec.nx,
        "ny": grid.spec.ny,
        "masked": grid.masked_count(),
        "best": best,
    });
    (summary, human)
}

fn cmd_dop_map(cli: &Cli, a: &DopMapArgs) -> CliResult {
    let anchors = load_anchors(&a.anchors)?;
    let (nx, ny) = a.res;
    let spec = match a.bounds {
        Some([x0, x1, y0, y1]) => GridSpec::new(x0, x1, y0, y1, nx, ny)?,
        None => GridSpec::covering(&anchors, a.margin, nx, ny)?,
    };
    let central = match a.central {
        Some(0) => return Err(CliError::Input("--central is 1-based".into())),
        c => c.map(|c| c - 1),
    };
    let grid = dop_map(&anchors, &spec, a.kind, central)?;
    let payload = match pick_format(a.format, a.out.as_deref()) {
        Format::Csv => grid_to_csv(&grid),
        Format::Json => to_json_text(&grid_to_json(&grid)),
    };
    let out = a.out.as_deref();
    let (summary, human) = grid_summary(&grid, out.unwrap_or(Path::new("-")));
    emit(cli, out, &payload, summary, human)
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> u64 {
    flag.or(file).unwrap_or(0)
}

fn cmd_simulate(cli: &Cli, a: &ScenarioArgs) -> CliResult {
    let (scenario, file_seed) = load_scenario(&a.scenario, a.sigma)?;
    let seed = resolve_seed(a.seed, file_seed);
    let (truth, stream) = match &scenario {
        Scenario::Static(s) => (vec![s.target; s.samples], simulate_static_stream(s, seed)?),
        Scenario::Track(s) => (segment_points(s.segment, s.steps), simulate_track_stream(s, seed)?),
    };
    let rows = PairIndex::new(scenario.anchors().len());
    let payload = match pick_format(a.format, a.out.as_deref()) {
        Format::Csv => {
            let mut out = String::from("index,true_x,true_y,pair_i,pair_j,d_ij_m\n");
            for (k, (p, d)) in truth.iter().zip(&stream).enumerate() {
                for (&(i, j), v) in rows.rows().iter().zip(d.values()) {
                    out.push_str(&format!(
                        "{k},{},{},{},{},{}\n",
                        format_number(p.x),
                        format_number(p.y),
                        i + 1,
                        j + 1,
                        format_number(*v)
                    ));
                }
            }
            out
        }
        Format::Json => {
            let frames: Vec<Value> = truth
                .iter()
                .zip(&stream)
                .enumerate()
                .map(|(k, (p, d))| json!({ "index": k, "truth": p, "d_ij_m": d.values() }))
                .collect();
            to_json_text(&json!({
                "scenario": ScenarioFile::from_scenario(&scenario, Some(seed)),
                "pairs": rows.rows().iter().map(|&(i, j)| [i + 1, j + 1]).collect::<Vec<_>>(),
                "frames": frames,
            }))
        }
    };
    let out = a.out.as_deref();
    let name = out.unwrap_or(Path::new("-")).display().to_string();
    let summary = json!({ "scenario": scenario.name(), "seed": seed, "frames": stream.len(), "out": name });
    let human = format!("wrote {name}: {} frames of {} (seed {seed})", stream.len(), scenario.name());
    emit(cli, out, &payload, summary, human)
}

fn cmd_track(cli: &Cli, a: &ScenarioArgs) -> CliResult {
    let (scenario, file_seed) = load_scenario(&a.scenario, a.sigma)?;
    let seed = resolve_seed(a.seed, file_seed);
    let Scenario::Track(s) = &scenario else {
        return Err(CliError::Input(format!("{}: not a tracking scenario", a.scenario)));
    };
    let report = scenario.run(seed)?;
    let stream = simulate_track_stream(s, seed)?;
    let trajectory = track(&stream, &s.anchors, s.estimator, &s.tracker)?;
    let payload = match pick_format(a.format, a.out.as_deref()) {
        Format::Csv => trajectory_to_csv(&trajectory),
        Format::Json => to_json_text(&trajectory_to_json(&trajectory)),
    };
    let flagged = trajectory.fixes.iter().filter(|f| f.quality.status != FixStatus::Ok).count();
    let out = a.out.as_deref();
    let name = out.unwrap_or(Path::new("-")).display().to_string();
    let summary = json!({
        "scenario": s.name,
        "seed": seed,
        "steps": s.steps,
        "burn_in": s.burn_in,
        "rmse": report.rmse,
        "flagged_fixes": flagged,
        "out": name,
    });
    let human = format!(
        "wrote {name}: {} fixes, rmse {} m after {} burn-in steps (seed {seed})",
        s.steps,
        format_number(report.rmse),
        s.burn_in
    );
    emit(cli, out, &payload, summary, human)?;
    if cli.strict && flagged > 0 {
        return Err(CliError::NotConverged(format!("{flagged} tracker fixes were not ok")));
    }
    Ok(())
}

fn pipeline(s: &Scenario) -> &'static str {
    match s {
        Scenario::Static(_) => "static",
        Scenario::Track(_) => "track",
    }
}

fn deployment(s: &Scenario) -> String {
    let d = match s {
        Scenario::Static(s) => &s.deployment,
        Scenario::Track(s) => &s.deployment,
    };
    if d.is_empty() {
        s.name().to_string()
    } else {
        d.clone()
    }
}

fn estimator(s: &Scenario) -> String {
    match s {
        Scenario::Static(s) => s.estimator.to_string(),
        Scenario::Track(s) => s.estimator.to_string(),
    }
}

/// Pivot reports into rows (pipeline, estimator) by deployment columns.
fn comparison_table(reports: &[ScenarioReport]) -> (Vec<String>, Vec<TableRow>) {
    let mut columns: Vec<String> = Vec::new();
    let mut rows: Vec<TableRow> = Vec::new();
    for r in reports {
        let col = deployment(&r.scenario);
        let c = columns.iter().position(|d| *d == col).unwrap_or_else(|| {
            columns.push(col);
            columns.len() - 1
        });
        let key = (pipeline(&r.scenario).to_string(), estimator(&r.scenario));
        let row = match rows.iter().position(|(p, e, _)| (p, e) == (&key.0, &key.1)) {
            Some(k) => k,
            None => {
                rows.push((key.0, key.1, Vec::new()));
                rows.len() - 1
            }
        };
        let cells = &mut rows[row].2;
        cells.resize(cells.len().max(c + 1), None);
        cells[c] = Some(r.rmse);
    }
    for row in &mut rows {
        row.2.resize(columns.len(), None);
    }
    (columns, rows)
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> CliResult {
    let names: Vec<String> = if a.scenarios.is_empty() {
        tdoa_core::evaluation::builtin_scenarios()
            .iter()
            .map(|s| s.name().to_string())
            .collect()
    } else {
        a.scenarios.clone()
    };
    let mut scenarios = Vec::with_capacity(names.len());
    let mut file_seed = None;
    for name in &names {
        let (s, seed) = load_scenario(name, a.sigma)?;
        file_seed = file_seed.or(seed);
        scenarios.push(s);
    }
    let seed = resolve_seed(a.seed, file_seed);
    let reports = run_paired(&scenarios, seed)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(path) = &a.out {
        let all: Vec<Value> = reports.iter().map(report_to_json).collect();
        write(path, &to_json_text(&Value::Array(all)))?;
    }
    let (columns, rows) = comparison_table(&reports);
    if cli.json {
        let table: Vec<Value> = rows
            .iter()
            .map(|(p, e, cells)| {
                let rmse: serde_json::Map<String, Value> =
                    columns.iter().zip(cells).map(|(c, v)| (c.clone(), json!(v))).collect();
                json!({ "pipeline": p, "estimator": e, "rmse": rmse })
            })
            .collect();
        let runs: Vec<Value> = reports
            .iter()
            .map(|r| {
                json!({
                    "scenario": r.scenario.name(),
                    "deployment": deployment(&r.scenario),
                    "pipeline": pipeline(&r.scenario),
                    "estimator": estimator(&r.scenario),
                    "rmse": r.rmse,
                    "failures": r.failures,
                    "non_converged": r.non_converged,
                })
            })
            .collect();
        say(&to_json_text(&json!({ "seed": seed, "table": table, "runs": runs })))?;
    } else {
        say(&render_table(seed, &columns, &rows))?;
    }
    let flagged: usize = reports.iter().map(|r| r.non_converged + r.failures).sum();
    if cli.strict && flagged > 0 {
        return Err(CliError::NotConverged(format!(
            "{flagged} samples failed or did not converge"
        )));
    }
    Ok(())
}

fn render_table(seed: u64, columns: &[String], rows: &[TableRow]) -> String {
    let mut header = vec!["pipeline".to_string(), "estimator".to_string()];
    header.extend(columns.iter().map(|c| format!("{c} rmse_m")));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(p, e, cells)| {
            let mut line = vec![p.clone(), e.clone()];
            line.extend(cells.iter().map(|v| v.map_or("-".into(), |v| format_number(round_sig(v)))));
            line
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|k| body.iter().map(|l| l[k].len()).chain([header[k].len()]).max().unwrap_or(0))
        .collect();
    let fmt = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = format!("paired comparison, seed {seed}\n");
    out.push_str(&fmt(&header));
    for line in &body {
        out.push_str(&fmt(line));
    }
    out
}
