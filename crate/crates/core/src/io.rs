//! File formats: scenarios, calibrations, trace files and run summaries.
//!
//! Traces are comma-separated text preceded by `#` header lines carrying the
//! format version, the SHA-256 of the scenario file, the seed and the mode.
//! Numbers are written in shortest round-trip form, so a plan trace can be
//! read back into the exact trajectory it was written from.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{ControlInput, RobotState};
use crate::error::{Error, Result};
use crate::planner::{NlpSolution, SolveStatus, Trajectory};
use crate::reactive_set::ReactiveSetModel;
use crate::simulator::{Outcome, Scenario, SimTrace};

pub const TRACE_VERSION: u32 = 1;

const PACKAGED: [(&str, &str); 4] = [
    ("needle_050", include_str!("../scenarios/needle_050.json")),
    ("needle_020", include_str!("../scenarios/needle_020.json")),
    ("blind_corner", include_str!("../scenarios/blind_corner.json")),
    ("empty", include_str!("../scenarios/empty.json")),
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses scenario JSON; unknown keys and malformed blocks are schema errors.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
}

/// A scenario with the digest of the bytes it was read from.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub sha256: String,
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<LoadedScenario> {
    let bytes = fs::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Schema(e.to_string()))?;
    let scenario = parse_scenario(text)?;
    scenario.validate()?;
    Ok(LoadedScenario {
        scenario,
        sha256: sha256_hex(&bytes),
    })
}

/// Canonical serialization: pretty JSON with a trailing newline.
pub fn scenario_to_json(sc: &Scenario) -> Result<String> {
    Ok(serde_json::to_string_pretty(sc)? + "\n")
}

pub fn save_scenario(sc: &Scenario, path: &Path) -> Result<()> {
    fs::write(path, scenario_to_json(sc)?)?;
    Ok(())
}

/// Names and file contents of the bundled scenario suite.
pub fn packaged_scenarios() -> &'static [(&'static str, &'static str)] {
    &PACKAGED
}

pub fn packaged_scenario(name: &str) -> Option<Scenario> {
    PACKAGED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_scenario(text).expect("packaged scenarios parse"))
}

/// Reads and validates a reactive-set model file.
pub fn load_reactive_model(path: &Path) -> Result<ReactiveSetModel> {
    let text = fs::read_to_string(path)?;
    let model: ReactiveSetModel = serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceHeader {
    pub version: u32,
    pub kind: String,
    pub scenario_sha256: String,
    pub seed: Option<u64>,
    pub mode: String,
}

impl TraceHeader {
    fn write(&self, out: &mut String) {
        out.push_str("# reactive-horizon trace\n");
        out.push_str(&format!("# version={}\n", self.version));
        out.push_str(&format!("# kind={}\n", self.kind));
        out.push_str(&format!("# scenario_sha256={}\n", self.scenario_sha256));
        match self.seed {
            Some(s) => out.push_str(&format!("# seed={s}\n")),
            None => out.push_str("# seed=none\n"),
        }
        out.push_str(&format!("# mode={}\n", self.mode));
    }
}

/// One trace row. Plan traces use `mode = NODE` and both margins; simulation
/// traces store the distance to the nearest true obstacle as the obstacle
/// margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub omega: f64,
    pub accel: f64,
    pub alpha: f64,
    pub mode: String,
    pub obstacle_margin: Option<f64>,
    pub visibility_margin: Option<f64>,
    pub fallback: u8,
}

impl TraceRow {
    pub fn state(&self) -> RobotState {
        RobotState::new(self.x, self.y, self.heading, self.v, self.omega)
    }

    pub fn control(&self) -> ControlInput {
        ControlInput::new(self.accel, self.alpha)
    }
}

fn write_rows(header: &TraceHeader, rows: &[TraceRow]) -> Result<String> {
    let mut out = String::new();
    header.write(&mut out);
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Schema(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| Error::Schema(e.to_string()))?;
    out.push_str(std::str::from_utf8(&body).expect("csv output is UTF-8"));
    Ok(out)
}

fn mode_name(secure: bool) -> &'static str {
    if secure {
        "secure"
    } else {
        "baseline"
    }
}

/// Per-step trace of a closed-loop run; one row per control step.
pub fn sim_trace_csv(trace: &SimTrace, scenario_sha256: &str) -> Result<String> {
    let header = TraceHeader {
        version: TRACE_VERSION,
        kind: "simulation".into(),
        scenario_sha256: scenario_sha256.into(),
        seed: Some(trace.seed),
        mode: mode_name(trace.secure).into(),
    };
    let rows: Vec<TraceRow> = trace
        .steps
        .iter()
        .map(|s| TraceRow {
            t: s.t,
            x: s.state.position.x,
            y: s.state.position.y,
            heading: s.state.heading,
            v: s.state.linear_speed,
            omega: s.state.angular_speed,
            accel: s.control.linear_accel,
            alpha: s.control.angular_accel,
            mode: s.mode.as_str().into(),
            obstacle_margin: Some(s.clearance),
            visibility_margin: None,
            fallback: u8::from(s.fallback),
        })
        .collect();
    write_rows(&header, &rows)
}

/// Node trace of one solution.
pub fn plan_trace_csv(sol: &NlpSolution, scenario_sha256: &str) -> Result<String> {
    let header = TraceHeader {
        version: TRACE_VERSION,
        kind: "plan".into(),
        scenario_sha256: scenario_sha256.into(),
        seed: None,
        mode: mode_name(sol.mode == crate::planner::Mode::Secure).into(),
    };
    let times = sol.trajectory().times();
    let mut rows: Vec<TraceRow> = sol
        .states
        .iter()
        .zip(&sol.controls)
        .zip(&sol.margins)
        .zip(times)
        .map(|(((x, u), m), t)| TraceRow {
            t,
            x: x.position.x,
            y: x.position.y,
            heading: x.heading,
            v: x.linear_speed,
            omega: x.angular_speed,
            accel: u.linear_accel,
            alpha: u.angular_accel,
            mode: "NODE".into(),
            obstacle_margin: m.obstacle,
            visibility_margin: m.visibility,
            fallback: 0,
        })
        .collect();
    // Keep t_f exact rather than (K - 1) * h.
    if let Some(last) = rows.last_mut() {
        last.t = sol.t_f;
    }
    write_rows(&header, &rows)
}

/// Splits a trace file into its header and rows.
pub fn parse_trace(text: &str) -> Result<(TraceHeader, Vec<TraceRow>)> {
    let mut fields = std::collections::HashMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line.trim_start_matches('#').trim().split_once('=') {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| {
        fields
            .get(k)
            .cloned()
            .ok_or_else(|| Error::Schema(format!("trace header lacks {k}")))
    };
    let version: u32 = get("version")?
        .parse()
        .map_err(|_| Error::Schema("bad trace version".into()))?;
    if version != TRACE_VERSION {
        return Err(Error::Schema(format!("unsupported trace version {version}")));
    }
    let seed = match get("seed")?.as_str() {
        "none" => None,
        s => Some(s.parse().map_err(|_| Error::Schema("bad trace seed".into()))?),
    };
    let header = TraceHeader {
        version,
        kind: get("kind")?,
        scenario_sha256: get("scenario_sha256")?,
        seed,
        mode: get("mode")?,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<TraceRow>, _>>()
        .map_err(|e| Error::Schema(e.to_string()))?;
    Ok((header, rows))
}

/// Rebuilds the trajectory stored in a plan trace.
pub fn trajectory_from_rows(rows: &[TraceRow]) -> Result<Trajectory> {
    let last = rows.last().ok_or_else(|| Error::Schema("trace has no rows".into()))?;
    if rows.len() < 2 {
        return Err(Error::Schema("a plan trace needs at least two nodes".into()));
    }
    Ok(Trajectory {
        states: rows.iter().map(TraceRow::state).collect(),
        controls: rows.iter().map(TraceRow::control).collect(),
        t_f: last.t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub t: f64,
    pub t_f: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub t: f64,
    pub position: [f64; 2],
    pub obstacle: crate::geometry::ConvexPolygon,
}

/// Companion of a simulation trace; holds everything that is not per step,
/// including wall-clock figures that differ between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub scenario_sha256: String,
    pub mode: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub collision: bool,
    pub goal_reached: bool,
    pub steps: usize,
    pub final_time: f64,
    pub min_clearance: f64,
    pub detections: Vec<DetectionSummary>,
    pub stops: Vec<f64>,
    pub plans: Vec<PlanSummary>,
    pub fallback_steps: usize,
    pub runtime_seconds: f64,
}

impl RunSummary {
    pub fn new(trace: &SimTrace, scenario_sha256: &str, runtime_seconds: f64) -> Self {
        Self {
            scenario: trace.scenario.clone(),
            scenario_sha256: scenario_sha256.into(),
            mode: mode_name(trace.secure).into(),
            seed: trace.seed,
            outcome: trace.outcome,
            collision: trace.collision,
            goal_reached: trace.goal_reached,
            steps: trace.steps.len(),
            final_time: trace.steps.last().map_or(0.0, |s| s.t),
            min_clearance: trace.min_clearance(),
            detections: trace
                .detections
                .iter()
                .map(|d| DetectionSummary {
                    t: d.time,
                    position: [d.robot_state.position.x, d.robot_state.position.y],
                    obstacle: d.obstacle.clone(),
                })
                .collect(),
            stops: trace.stops.clone(),
            plans: trace
                .plans
                .iter()
                .map(|p| PlanSummary {
                    t: p.t,
                    t_f: p.solution.t_f,
                    status: p.solution.status,
                    iterations: p.solution.iterations,
                    solve_seconds: p.seconds,
                })
                .collect(),
            fallback_steps: trace.steps.iter().filter(|s| s.fallback).count(),
            runtime_seconds,
        }
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}
