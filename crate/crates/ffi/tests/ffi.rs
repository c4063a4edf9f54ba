use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use reactive_horizon_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rh_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn packaged(name: &str) -> *mut RhScenario {
    let name = CString::new(name).unwrap();
    let mut sc = ptr::null_mut();
    let st = unsafe { rh_scenario_packaged(name.as_ptr(), &mut sc) };
    assert_eq!(st, RhStatus::Ok, "{}", last_error());
    assert!(!sc.is_null());
    sc
}

#[test]
fn empty_world_plan_through_handles() {
    let sc = packaged("empty");
    let mut plan = ptr::null_mut();
    assert_eq!(
        unsafe { rh_plan(sc, true, &mut plan) },
        RhStatus::Ok,
        "{}",
        last_error()
    );
    unsafe {
        assert!(rh_plan_converged(plan));
        let n = rh_plan_node_count(plan);
        assert!(n >= 2);
        let t_f = rh_plan_final_time(plan);
        assert!(t_f > 0.0);
        let mut last = RhNode::default();
        assert_eq!(rh_plan_node(plan, n - 1, &mut last), RhStatus::Ok);
        assert_eq!(last.t, t_f);
        let mut node = RhNode::default();
        assert_eq!(rh_plan_node(plan, n, &mut node), RhStatus::IndexOutOfRange);
        assert!(last_error().contains("node"));

        let mut csv = ptr::null_mut();
        assert_eq!(rh_plan_trace_csv(plan, &mut csv), RhStatus::Ok);
        let text = CStr::from_ptr(csv).to_str().unwrap().to_owned();
        rh_string_free(csv);
        assert!(text.starts_with("# reactive-horizon trace"));
        let rows = text.lines().filter(|l| l.contains(",NODE,")).count();
        assert_eq!(rows, n);

        rh_plan_free(plan);
        rh_scenario_free(sc);
    }
}

#[test]
fn empty_world_simulation_reaches_goal() {
    let sc = packaged("empty");
    let mut sim = ptr::null_mut();
    assert_eq!(
        unsafe { rh_simulate(sc, true, 3, &mut sim) },
        RhStatus::Ok,
        "{}",
        last_error()
    );
    unsafe {
        let mut outcome = RhOutcome::TimeLimit;
        assert_eq!(rh_simulation_outcome(sim, &mut outcome), RhStatus::Ok);
        assert_eq!(outcome, RhOutcome::GoalReached);
        assert!(!rh_simulation_collision(sim));
        assert_eq!(rh_simulation_detection_count(sim), 0);
        assert!(rh_simulation_min_clearance(sim) > 0.0);
        let steps = rh_simulation_step_count(sim);
        let mut csv = ptr::null_mut();
        assert_eq!(rh_simulation_trace_csv(sim, &mut csv), RhStatus::Ok);
        let text = CStr::from_ptr(csv).to_str().unwrap().to_owned();
        rh_string_free(csv);
        assert!(text.contains("# seed=3"));
        let rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(rows, steps);
        rh_simulation_free(sim);
        rh_scenario_free(sc);
    }
}

#[test]
fn null_and_bad_inputs_report_status() {
    let mut sc = ptr::null_mut();
    unsafe {
        assert_eq!(rh_scenario_load(ptr::null(), &mut sc), RhStatus::NullArgument);
        assert!(last_error().contains("path"));
        let bad = CString::new("{\"name\": 1}").unwrap();
        assert_eq!(rh_scenario_from_json(bad.as_ptr(), &mut sc), RhStatus::InvalidInput);
        assert!(!last_error().is_empty());
        assert!(sc.is_null());
        let missing = CString::new("/nonexistent/scenario.json").unwrap();
        assert_eq!(rh_scenario_load(missing.as_ptr(), &mut sc), RhStatus::Io);
        let nope = CString::new("nope").unwrap();
        assert_eq!(rh_scenario_packaged(nope.as_ptr(), &mut sc), RhStatus::InvalidInput);
        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(
            rh_scenario_load(invalid.as_ptr().cast(), &mut sc),
            RhStatus::InvalidUtf8
        );

        let mut plan = ptr::null_mut();
        assert_eq!(rh_plan(ptr::null(), true, &mut plan), RhStatus::NullArgument);
        assert!(plan.is_null());
        assert_eq!(rh_plan_node_count(ptr::null()), 0);
        assert!(rh_plan_final_time(ptr::null()).is_nan());
        assert!(!rh_simulation_collision(ptr::null()));

        // Freeing null is a no-op.
        rh_scenario_free(ptr::null_mut());
        rh_plan_free(ptr::null_mut());
        rh_simulation_free(ptr::null_mut());
        rh_string_free(ptr::null_mut());
    }
}

#[test]
fn scenario_file_round_trip_keeps_digest() {
    let dir = tempfile::tempdir().unwrap();
    let (_, text) = reactive_horizon::io::packaged_scenarios()[3];
    let path = dir.path().join("empty.json");
    std::fs::write(&path, text).unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let c_json = CString::new(text).unwrap();
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(rh_scenario_load(c_path.as_ptr(), &mut a), RhStatus::Ok);
        assert_eq!(rh_scenario_from_json(c_json.as_ptr(), &mut b), RhStatus::Ok);
        let (mut pa, mut pb) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(rh_plan(a, false, &mut pa), RhStatus::Ok);
        assert_eq!(rh_plan(b, false, &mut pb), RhStatus::Ok);
        let (mut ca, mut cb) = (ptr::null_mut(), ptr::null_mut());
        rh_plan_trace_csv(pa, &mut ca);
        rh_plan_trace_csv(pb, &mut cb);
        assert_eq!(CStr::from_ptr(ca), CStr::from_ptr(cb));
        rh_string_free(ca);
        rh_string_free(cb);
        rh_plan_free(pa);
        rh_plan_free(pb);
        rh_scenario_free(a);
        rh_scenario_free(b);
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(rh_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let header_path = concat!(env!("CARGO_MANIFEST_DIR"), "/include/reactive_horizon.h");
    let header = std::fs::read_to_string(header_path).unwrap();
    for f in [
        "rh_last_error",
        "rh_version",
        "rh_scenario_load",
        "rh_scenario_from_json",
        "rh_scenario_packaged",
        "rh_scenario_free",
        "rh_plan",
        "rh_plan_free",
        "rh_plan_node",
        "rh_plan_trace_csv",
        "rh_simulate",
        "rh_simulation_outcome",
        "rh_simulation_trace_csv",
        "rh_string_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    // Syntax check only; skipped where no C compiler is installed.
    match Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c", header_path])
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(e) => eprintln!("cc unavailable, header not compiled: {e}"),
    }
}
