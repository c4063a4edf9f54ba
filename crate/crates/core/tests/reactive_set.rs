use std::f64::consts::TAU;

use proptest::prelude::*;
use reactive_horizon::dynamics::{ModelParams, RobotState};
use reactive_horizon::geometry::{rotation, Vec2};
use reactive_horizon::reactive_controller::ReactParams;
use reactive_horizon::reactive_set::*;
use reactive_horizon::sensor::SensorParams;

fn small_config() -> CalibrationConfig {
    CalibrationConfig {
        speed_samples: 5,
        turn_samples: 3,
        wall_angles: 4,
        wall_offsets: vec![0.9],
        ..CalibrationConfig::default()
    }
}

#[test]
fn bundled_model_reaches_past_braking_distance() {
    let m = default_model();
    let model = ModelParams::default();
    for k in 0..=20 {
        let v = model.v_max * k as f64 / 20.0;
        let reach = m.forward_reach(v, 0.0).unwrap();
        let braking = v * v / (2.0 * model.a_max);
        assert!(reach >= braking, "v = {v}: reach {reach} < {braking}");
    }
}

#[test]
fn bundled_model_covers_default_speed_box() {
    let m = default_model();
    m.validate().unwrap();
    let model = ModelParams::default();
    assert_eq!(m.v_max, model.v_max);
    assert_eq!(m.omega_max, model.omega_max);
    assert!(m
        .evaluate(&RobotState::new(0.0, 0.0, 0.0, model.v_max, -model.omega_max))
        .is_ok());
}

#[test]
fn small_calibration_contains_all_paths() {
    let (m, report) = calibrate(
        &small_config(),
        &ReactParams::default(),
        &ModelParams::default(),
        &SensorParams::default(),
    )
    .unwrap();
    assert_eq!(report.points_contained, report.points_total);
    assert!(report.max_violation <= 0.0);
    assert_eq!(report.samples.len(), 15);
    m.validate().unwrap();
}

#[test]
fn stronger_brakes_shrink_forward_reach() {
    let cfg = small_config();
    let rp = ReactParams::default();
    let sensor = SensorParams::default();
    let base = ModelParams::default();
    let strong = ModelParams {
        a_max: 2.0 * base.a_max,
        ..base
    };
    let (m1, _) = calibrate(&cfg, &rp, &base, &sensor).unwrap();
    let (m2, _) = calibrate(&cfg, &rp, &strong, &sensor).unwrap();
    for (v, w) in cfg.grid(&base) {
        if v == 0.0 {
            continue;
        }
        let (r1, r2) = (m1.forward_reach(v, w).unwrap(), m2.forward_reach(v, w).unwrap());
        assert!(r2 < r1, "v = {v}, omega = {w}: {r2} >= {r1}");
    }
}

#[test]
fn off_grid_maneuvers_stay_inside() {
    let cfg = CalibrationConfig::default();
    let audit = audit_off_grid(
        &default_model(),
        10,
        5,
        &cfg,
        &ReactParams::default(),
        &ModelParams::default(),
        &SensorParams::default(),
    )
    .unwrap();
    assert_eq!(audit.states, 10);
    assert!(audit.fraction_contained() >= 0.99, "{:?}", audit);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn evaluation_follows_the_robot(
        v in 0.0..2.0f64, w in -2.0..2.0f64, th in 0.0..TAU, x in -5.0..5.0f64, y in -5.0..5.0f64,
    ) {
        let m = default_model();
        let here = m.evaluate(&RobotState::new(0.0, 0.0, 0.0, v, w)).unwrap();
        let there = m.evaluate(&RobotState::new(x, y, th, v, w)).unwrap();
        let c = rotation(th) * here.center + Vec2::new(x, y);
        prop_assert!((there.center - c).norm() < 1e-9);
        let (s1, s2) = (here.semi_axes(), there.semi_axes());
        prop_assert!((s1.0 - s2.0).abs() < 1e-9 && (s1.1 - s2.1).abs() < 1e-9);
    }

    #[test]
    fn set_contains_robot_position(v in 0.0..2.0f64, w in -2.0..2.0f64) {
        let m = default_model();
        let e = m.evaluate(&RobotState::new(0.0, 0.0, 0.0, v, w)).unwrap();
        prop_assert!(e.contains(Vec2::zeros()));
        prop_assert!(e.semi_axes().1 >= m.floor - 1e-12);
    }

    #[test]
    fn speeds_outside_the_box_are_refused(v in 2.01..4.0f64, w in -2.0..2.0f64) {
        let m = default_model();
        prop_assert!(m.evaluate(&RobotState::new(0.0, 0.0, 0.0, v, w)).is_err());
        prop_assert!(m.evaluate(&RobotState::new(0.0, 0.0, 0.0, -v, w)).is_err());
    }
}
