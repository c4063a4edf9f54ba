//! C interface to the planner and simulator.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free`. Every fallible call returns an [`RhStatus`]; on
//! failure `rh_last_error` describes the cause for the calling thread.
//! Strings returned to C are owned by the caller and released with
//! `rh_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use reactive_horizon::error::Error;
use reactive_horizon::io;
use reactive_horizon::planner::{self, NlpSolution};
use reactive_horizon::simulator::{self, Outcome, Scenario, SimTrace};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed or inconsistent input: schema, parameters, geometry.
    InvalidInput = 3,
    Io = 4,
    IndexOutOfRange = 5,
    /// Any other failure inside the library.
    Runtime = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhOutcome {
    GoalReached = 0,
    Collision = 1,
    InfeasibleAfterDetection = 2,
    PlanFailed = 3,
    TimeLimit = 4,
}

impl From<Outcome> for RhOutcome {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::GoalReached => RhOutcome::GoalReached,
            Outcome::Collision => RhOutcome::Collision,
            Outcome::InfeasibleAfterDetection => RhOutcome::InfeasibleAfterDetection,
            Outcome::PlanFailed => RhOutcome::PlanFailed,
            Outcome::TimeLimit => RhOutcome::TimeLimit,
        }
    }
}

/// Node of a planned trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RhNode {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub omega: f64,
    pub accel: f64,
    pub alpha: f64,
}

/// Opaque scenario handle.
pub struct RhScenario {
    scenario: Scenario,
    sha256: String,
}

/// Opaque plan handle.
pub struct RhPlan {
    solution: NlpSolution,
    sha256: String,
}

/// Opaque simulation result handle.
pub struct RhSimulation {
    trace: SimTrace,
    sha256: String,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RhStatus {
    match e {
        Error::Io(_) => RhStatus::Io,
        Error::Schema(_)
        | Error::Json(_)
        | Error::InvalidParams(_)
        | Error::InvalidProblem(_)
        | Error::InvalidPolygon(_)
        | Error::DegenerateInput(_)
        | Error::InfeasibleScenario(_) => RhStatus::InvalidInput,
        _ => RhStatus::Runtime,
    }
}

/// Runs `f`, recording failures and turning panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (RhStatus, String)>) -> RhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RhStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside reactive-horizon");
            RhStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (RhStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (RhStatus, String) {
    (RhStatus::NullArgument, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, (RhStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (RhStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, (RhStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn owned_string(s: String) -> Result<*mut c_char, (RhStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (RhStatus::Runtime, "string contains a NUL byte".into()))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rh_scenario_load(path: *const c_char, out: *mut *mut RhScenario) -> RhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let loaded = io::load_scenario(Path::new(path)).map_err(lib_err)?;
        put(
            out,
            RhScenario {
                scenario: loaded.scenario,
                sha256: loaded.sha256,
            },
        );
        Ok(())
    })
}

/// Parses and validates scenario JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rh_scenario_from_json(json: *const c_char, out: *mut *mut RhScenario) -> RhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(json, "json")?;
        let scenario = io::parse_scenario(text).map_err(lib_err)?;
        scenario.validate().map_err(lib_err)?;
        put(
            out,
            RhScenario {
                scenario,
                sha256: io::sha256_hex(text.as_bytes()),
            },
        );
        Ok(())
    })
}

/// Loads one of the bundled scenarios by name (`empty`, `needle_050`,
/// `needle_020`, `blind_corner`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rh_scenario_packaged(name: *const c_char, out: *mut *mut RhScenario) -> RhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = str_arg(name, "name")?;
        let text = io::packaged_scenarios()
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| (RhStatus::InvalidInput, format!("no packaged scenario named {name:?}")))?;
        let scenario = io::parse_scenario(text).map_err(lib_err)?;
        put(
            out,
            RhScenario {
                scenario,
                sha256: io::sha256_hex(text.as_bytes()),
            },
        );
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from an `rh_scenario_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn rh_scenario_free(scenario: *mut RhScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Plans once from the scenario's start over its provided map. A solve that
/// ends without convergence still yields a plan; check `rh_plan_converged`.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rh_plan(scenario: *const RhScenario, secure: bool, out: *mut *mut RhPlan) -> RhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = handle(scenario, "scenario")?;
        let sc = &s.scenario;
        let belief = simulator::initial_belief(sc).map_err(lib_err)?;
        let problem = simulator::build_problem(sc, sc.start, &belief).map_err(lib_err)?;
        let solution = if secure {
            planner::plan(&problem, None)
        } else {
            planner::plan_baseline(&problem, None)
        }
        .map_err(lib_err)?;
        put(
            out,
            RhPlan {
                solution,
                sha256: s.sha256.clone(),
            },
        );
        Ok(())
    })
}

/// # Safety
/// `plan` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rh_plan_free(plan: *mut RhPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Final time in seconds; NaN for a null handle.
///
/// # Safety
/// `plan` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rh_plan_final_time(plan: *const RhPlan) -> f64 {
    plan.as_ref().map_or(f64::NAN, |p| p.solution.t_f)
}

/// # Safety
/// `plan` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rh_plan_converged(plan: *const RhPlan) -> bool {
    plan.as_ref().is_some_and(|p| p.solution.converged())
}

/// # Safety
/// `plan` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rh_plan_node_count(plan: *const RhPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.solution.states.len())
}

/// # Safety
/// `plan` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rh_plan_node(plan: *const RhPlan, index: usize, out: *mut RhNode) -> RhStatus {
    guard(|| {
        let p = handle(plan, "plan")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let sol = &p.solution;
        if index >= sol.states.len() {
            return Err((
                RhStatus::IndexOutOfRange,
                format!("node {index} of {}", sol.states.len()),
            ));
        }
        let x = &sol.states[index];
        let u = &sol.controls[index];
        let h = sol.t_f / (sol.states.len() - 1) as f64;
        *out = RhNode {
            t: if index + 1 == sol.states.len() {
                sol.t_f
            } else {
                index as f64 * h
            },
            x: x.position.x,
            y: x.position.y,
            heading: x.heading,
            v: x.linear_speed,
            omega: x.angular_speed,
            accel: u.linear_accel,
            alpha: u.angular_accel,
        };
        Ok(())
    })
}

/// Plan trace in the CLI's CSV format.
///
/// # Safety
/// `plan` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rh_plan_trace_csv(plan: *const RhPlan, out: *mut *mut c_char) -> RhStatus {
    guard(|| {
        let p = handle(plan, "plan")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let csv = io::plan_trace_csv(&p.solution, &p.sha256).map_err(lib_err)?;
        *out = owned_string(csv)?;
        Ok(())
    })
}

/// Runs the closed loop against the scenario's true world.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rh_simulate(
    scenario: *const RhScenario,
    secure: bool,
    seed: u64,
    out: *mut *mut RhSimulation,
) -> RhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = handle(scenario, "scenario")?;
        let trace = simulator::run(&s.scenario, secure, seed).map_err(lib_err)?;
        put(
            out,
            RhSimulation {
                trace,
                sha256: s.sha256.clone(),
            },
        );
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rh_simulation_free(sim: *mut RhSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rh_simulation_outcome(sim: *const RhSimulation, out: *mut RhOutcome) -> RhStatus {
    guard(|| {
        let s = handle(sim, "sim")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.trace.outcome.into();
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rh_simulation_collision(sim: *const RhSimulation) -> bool {
    sim.as_ref().is_some_and(|s| s.trace.collision)
}

/// # Safety
/// `sim` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rh_simulation_step_count(sim: *const RhSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.trace.steps.len())
}

/// # Safety
/// `sim` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rh_simulation_detection_count(sim: *const RhSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.trace.detections.len())
}

/// # Safety
/// `sim` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rh_simulation_stop_count(sim: *const RhSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.trace.stops.len())
}

/// Smallest distance to a true obstacle over the run; NaN for a null handle.
///
/// # Safety
/// `sim` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rh_simulation_min_clearance(sim: *const RhSimulation) -> f64 {
    sim.as_ref().map_or(f64::NAN, |s| s.trace.min_clearance())
}

/// Per-step trace in the CLI's CSV format.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rh_simulation_trace_csv(sim: *const RhSimulation, out: *mut *mut c_char) -> RhStatus {
    guard(|| {
        let s = handle(sim, "sim")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let csv = io::sim_trace_csv(&s.trace, &s.sha256).map_err(lib_err)?;
        *out = owned_string(csv)?;
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn rh_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
