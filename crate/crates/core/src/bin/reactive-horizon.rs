use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use reactive_horizon::dynamics::ModelParams;
use reactive_horizon::error::Error;
use reactive_horizon::geometry::point_polygon_distance;
use reactive_horizon::io::{self, LoadedScenario, RunSummary};
use reactive_horizon::planner::{self, check_discretization, verify_minp_constraint, NlpSolution};
use reactive_horizon::reactive_controller::ReactParams;
use reactive_horizon::reactive_set::{self, CalibrationConfig};
use reactive_horizon::render;
use reactive_horizon::sensor::{BeliefMap, SensorParams};
use reactive_horizon::simulator::{self, Outcome, Scenario};

const SEED_ENV: &str = "REACTIVE_HORIZON_SEED";
const DENSE_FACTOR: usize = 10;
const VERIFY_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "reactive-horizon",
    version,
    about = "Secure minimum-time planning over untrusted maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a reactive-set model by simulating reactive maneuvers.
    Calibrate {
        /// JSON with optional `model`, `controller`, `sensor` and `calibration` blocks.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Model output path.
        #[arg(long)]
        out: PathBuf,
        /// Report output path; defaults to `<out>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Plan once from the scenario's start over its provided map.
    Plan {
        scenario: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Run the closed loop against the true world.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
        /// Falls back to REACTIVE_HORIZON_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Plan and simulate in both modes and print a comparison table.
    Compare {
        scenario: PathBuf,
        /// Monte-Carlo trials with a random unknown box per mode.
        #[arg(long, default_value_t = 0)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Check a plan trace: a visibility witness per node and dense margins.
    Verify {
        scenario: PathBuf,
        plan: PathBuf,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Write the bundled scenario files to a directory.
    Scenarios {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(multiple = false)]
struct ModeArgs {
    /// Secure planner (default).
    #[arg(long)]
    secure: bool,
    /// Baseline planner without visibility constraints.
    #[arg(long)]
    baseline: bool,
}

impl ModeArgs {
    fn secure(&self) -> bool {
        !self.baseline
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CalibrateParams {
    model: Option<ModelParams>,
    controller: ReactParams,
    sensor: Option<SensorParams>,
    calibration: CalibrationConfig,
}

/// Failure with the exit code it maps to.
struct Fail {
    code: u8,
    message: String,
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Schema(_)
            | Error::Json(_)
            | Error::InvalidParams(_)
            | Error::InvalidProblem(_)
            | Error::InvalidPolygon(_)
            | Error::DegenerateInput(_)
            | Error::InfeasibleScenario(_) => 2,
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        };
        Fail {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn fail(code: u8, message: impl Into<String>) -> Fail {
    Fail {
        code,
        message: message.into(),
    }
}

type CmdResult = Result<u8, Fail>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate { params, out, report } => calibrate(params.as_deref(), &out, report),
        Command::Plan {
            scenario,
            mode,
            out,
            calibration,
        } => plan(&scenario, mode.secure(), &out, calibration.as_deref()),
        Command::Simulate {
            scenario,
            mode,
            seed,
            out,
            calibration,
        } => resolve_seed(seed).and_then(|s| simulate(&scenario, mode.secure(), s, &out, calibration.as_deref())),
        Command::Compare {
            scenario,
            trials,
            seed,
            calibration,
        } => resolve_seed(seed).and_then(|s| compare(&scenario, trials, s, calibration.as_deref())),
        Command::Verify {
            scenario,
            plan,
            calibration,
        } => verify(&scenario, &plan, calibration.as_deref()),
        Command::Scenarios { out } => export_scenarios(&out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn resolve_seed(seed: Option<u64>) -> Result<u64, Fail> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| fail(2, format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn load(path: &Path, calibration: Option<&Path>) -> Result<LoadedScenario, Fail> {
    let mut loaded = io::load_scenario(path)?;
    if let Some(c) = calibration {
        loaded.scenario.reactive = Some(io::load_reactive_model(c)?);
    }
    Ok(loaded)
}

fn calibrate(params: Option<&Path>, out: &Path, report: Option<PathBuf>) -> CmdResult {
    let p: CalibrateParams = match params {
        Some(path) => {
            serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Fail::from(Error::Schema(e.to_string())))?
        }
        None => CalibrateParams::default(),
    };
    let model = p.model.unwrap_or_default();
    let sensor = p.sensor.unwrap_or_default();
    let clock = Instant::now();
    let (fitted, rep) = reactive_set::calibrate(&p.calibration, &p.controller, &model, &sensor)?;
    io::write_json(&fitted, out)?;
    let report_path = report.unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".report.json");
        PathBuf::from(s)
    });
    io::write_json(&rep, &report_path)?;
    println!(
        "calibrated {} grid points in {:.1} s: {} of {} path points contained, max violation {:.2e}",
        rep.samples.len(),
        clock.elapsed().as_secs_f64(),
        rep.points_contained,
        rep.points_total,
        rep.max_violation
    );
    println!("model: {}", out.display());
    println!("report: {}", report_path.display());
    Ok(0)
}

#[derive(Serialize)]
struct PlanFileSummary<'a> {
    scenario: &'a str,
    scenario_sha256: &'a str,
    mode: &'static str,
    t_f: f64,
    status: planner::SolveStatus,
    iterations: usize,
    kkt_residual: f64,
    constraint_violation: f64,
    lag: usize,
    min_clearance: f64,
    runtime_seconds: f64,
}

/// Closest approach of the node path to the obstacles the planner knew.
fn path_clearance(sol: &NlpSolution, belief: &BeliefMap) -> f64 {
    sol.states
        .iter()
        .flat_map(|x| {
            belief
                .known_obstacles
                .iter()
                .map(|o| point_polygon_distance(x.position, o))
        })
        .fold(f64::INFINITY, f64::min)
}

fn solve_once(sc: &Scenario, secure: bool) -> Result<(BeliefMap, NlpSolution, f64), Fail> {
    let belief = simulator::initial_belief(sc)?;
    let problem = simulator::build_problem(sc, sc.start, &belief)?;
    let clock = Instant::now();
    let sol = if secure {
        planner::plan(&problem, None)?
    } else {
        planner::plan_baseline(&problem, None)?
    };
    Ok((belief, sol, clock.elapsed().as_secs_f64()))
}

fn mode_name(secure: bool) -> &'static str {
    if secure {
        "secure"
    } else {
        "baseline"
    }
}

fn plan(path: &Path, secure: bool, out: &Path, calibration: Option<&Path>) -> CmdResult {
    let loaded = load(path, calibration)?;
    let sc = &loaded.scenario;
    fs::create_dir_all(out)?;
    let (belief, sol, secs) = solve_once(sc, secure)?;
    fs::write(out.join("plan.csv"), io::plan_trace_csv(&sol, &loaded.sha256)?)?;
    let scene = render::plan_scene(sc, &belief, &sol, &sc.reactive_model(), &sc.sensor)?;
    fs::write(out.join("plan.svg"), scene.to_svg())?;
    let clearance = path_clearance(&sol, &belief);
    io::write_json(
        &PlanFileSummary {
            scenario: &sc.name,
            scenario_sha256: &loaded.sha256,
            mode: mode_name(secure),
            t_f: sol.t_f,
            status: sol.status,
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            constraint_violation: sol.constraint_violation,
            lag: sol.lag,
            min_clearance: clearance,
            runtime_seconds: secs,
        },
        &out.join("summary.json"),
    )?;
    println!(
        "{} plan: t_f {:.3} s, status {:?}, {} iterations, min clearance {:.3} m, {:.2} s",
        mode_name(secure),
        sol.t_f,
        sol.status,
        sol.iterations,
        clearance,
        secs
    );
    if !sol.converged() {
        eprintln!(
            "error: solver did not converge; best iterate written to {}",
            out.display()
        );
        return Ok(3);
    }
    Ok(0)
}

fn simulate(path: &Path, secure: bool, seed: u64, out: &Path, calibration: Option<&Path>) -> CmdResult {
    let loaded = load(path, calibration)?;
    let sc = &loaded.scenario;
    fs::create_dir_all(out)?;
    let clock = Instant::now();
    let trace = simulator::run(sc, secure, seed)?;
    let runtime = clock.elapsed().as_secs_f64();
    fs::write(out.join("trace.csv"), io::sim_trace_csv(&trace, &loaded.sha256)?)?;
    io::write_json(
        &RunSummary::new(&trace, &loaded.sha256, runtime),
        &out.join("summary.json"),
    )?;
    for (name, scene) in render::sim_frames(sc, &trace) {
        fs::write(out.join(format!("frame_{name}.svg")), scene.to_svg())?;
    }
    for (i, snap) in trace.snapshots.iter().enumerate() {
        fs::write(
            out.join(format!("belief_{i:02}_{}.pgm", snap.label)),
            render::belief_pgm(&snap.belief),
        )?;
    }
    println!(
        "{} run: outcome {:?}, collision {}, {} detections, {} stops, {} plans, min clearance {:.3} m, {:.1} s",
        mode_name(secure),
        trace.outcome,
        trace.collision,
        trace.detections.len(),
        trace.stops.len(),
        trace.plans.len(),
        trace.min_clearance(),
        runtime
    );
    if secure && trace.collision {
        eprintln!("error: collision in secure mode");
        return Ok(4);
    }
    if trace.outcome == Outcome::PlanFailed {
        eprintln!("error: planner failed to converge");
        return Ok(3);
    }
    Ok(0)
}

fn compare(path: &Path, trials: usize, seed: u64, calibration: Option<&Path>) -> CmdResult {
    let loaded = load(path, calibration)?;
    let sc = &loaded.scenario;
    println!(
        "{:<9} {:>8} {:>10} {:>10} {:>10}  {:<26} {:>9} {:>10}",
        "mode", "t_f [s]", "status", "solve [s]", "clear [m]", "outcome", "collision", "run clear"
    );
    let mut solve_secs = [0.0; 2];
    let mut code = 0;
    for (k, secure) in [false, true].into_iter().enumerate() {
        let (belief, sol, secs) = solve_once(sc, secure)?;
        solve_secs[k] = secs;
        let trace = simulator::run(sc, secure, seed)?;
        println!(
            "{:<9} {:>8.3} {:>10} {:>10.2} {:>10.3}  {:<26} {:>9} {:>10.3}",
            mode_name(secure),
            sol.t_f,
            format!("{:?}", sol.status),
            secs,
            path_clearance(&sol, &belief),
            format!("{:?}", trace.outcome),
            trace.collision,
            trace.min_clearance()
        );
        if secure && trace.collision {
            code = 4;
        }
    }
    println!(
        "solve time ratio secure/baseline: {:.2}",
        solve_secs[1] / solve_secs[0].max(1e-9)
    );
    if trials > 0 {
        println!();
        println!(
            "{:<9} {:>7} {:>10} {:>6} {:>11} {:>6} {:>10}",
            "mode", "trials", "collisions", "goal", "infeasible", "other", "detections"
        );
        for secure in [false, true] {
            let mc = simulator::monte_carlo_safety(sc, trials, seed, secure)?;
            println!(
                "{:<9} {:>7} {:>10} {:>6} {:>11} {:>6} {:>10}",
                mode_name(secure),
                mc.trials,
                mc.collisions,
                mc.goal_reached,
                mc.infeasible_after_detection,
                mc.other,
                mc.detections
            );
            if secure && mc.collisions > 0 {
                code = 4;
            }
        }
    }
    Ok(code)
}

fn verify(path: &Path, plan_path: &Path, calibration: Option<&Path>) -> CmdResult {
    let loaded = load(path, calibration)?;
    let sc = &loaded.scenario;
    let (header, rows) = io::parse_trace(&fs::read_to_string(plan_path)?)?;
    if header.kind != "plan" {
        return Err(fail(2, format!("expected a plan trace, got kind {}", header.kind)));
    }
    if header.scenario_sha256 != loaded.sha256 {
        return Err(fail(2, "plan trace was produced from a different scenario file"));
    }
    let traj = io::trajectory_from_rows(&rows)?;
    let belief = simulator::initial_belief(sc)?;
    let mut problem = simulator::build_problem(sc, sc.start, &belief)?;
    if traj.states.len() != problem.nodes {
        return Err(fail(
            2,
            format!(
                "trace has {} nodes, scenario plans {}",
                traj.states.len(),
                problem.nodes
            ),
        ));
    }
    problem.start = traj.states[0];
    let minp = verify_minp_constraint(&traj, &problem, VERIFY_TOL)?;
    let dense = check_discretization(&traj, &problem, problem.lag, DENSE_FACTOR)?;
    println!(
        "witnesses: {} of {} nodes, failures {:?}",
        minp.witnesses.iter().skip(1).filter(|w| w.is_some()).count(),
        traj.states.len() - 1,
        minp.failures
    );
    println!(
        "dense check (factor {DENSE_FACTOR}): min visibility margin {:.4} m at t = {:.3} s",
        dense.min_margin, dense.worst_time
    );
    if minp.passed() && !dense.flagged() && dense.min_margin > 0.0 {
        println!("verify: pass");
        Ok(0)
    } else {
        println!("verify: FAIL");
        Ok(3)
    }
}

fn export_scenarios(out: &Path) -> CmdResult {
    fs::create_dir_all(out)?;
    for (name, text) in io::packaged_scenarios() {
        let target = out.join(format!("{name}.json"));
        fs::write(&target, text)?;
        println!("{}", target.display());
    }
    Ok(0)
}
