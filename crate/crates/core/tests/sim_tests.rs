use nalgebra::Vector6;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tactile_core::liegroup::{euler_to_pose, log, Pose, Twist};
use tactile_core::sim::push::PushedObject;
use tactile_core::sim::surface::{sensor_pose_at, TIP_RADIUS};
use tactile_core::sim::*;

#[test]
fn observation_errors_reproduce_the_reference_mae() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let model = ObservationModel::default();
    let sensor = euler_to_pose(&[1.0, -2.0, 4.0, 0.1, -0.05, 0.02]);
    let truth = *log(&sensor.inverse()).unwrap().as_vector();
    let n = 20_000;
    let mut abs = Vector6::zeros();
    for _ in 0..n {
        let obs = model.observe(&sensor, &mut rng).unwrap();
        abs += (log(obs.mean()).unwrap().as_vector() - truth).abs();
    }
    let mae = abs / n as f64;
    for j in 0..6 {
        let rel = mae[j] / REFERENCE_MAE[j];
        assert!((rel - 1.0).abs() < 0.03, "component {j}: {} vs {}", mae[j], REFERENCE_MAE[j]);
    }
}

#[test]
fn reported_covariance_is_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let model = ObservationModel::default();
    let sensor = euler_to_pose(&[2.0, 1.0, 3.0, -0.2, 0.1, 0.05]);
    let truth = sensor.inverse();
    let n = 20_000;
    let mut sq = Vector6::zeros();
    for _ in 0..n {
        let obs = model.observe(&sensor, &mut rng).unwrap();
        // Truth as a left perturbation of the reported mean, whitened by the reported covariance.
        let e = *log(&(truth * obs.mean().inverse())).unwrap().as_vector();
        let l = obs.cov().cholesky().unwrap().l();
        let w = l.solve_lower_triangular(&e).unwrap();
        sq += w.component_mul(&w);
    }
    let var = sq / n as f64;
    for j in 0..6 {
        assert!((var[j] - 1.0).abs() < 0.1, "component {j}: variance {}", var[j]);
    }
}

#[test]
fn flat_following_travels_the_commanded_distance() {
    let sc = Scenario::follow(SurfaceKind::Flat);
    let out = run_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(43)).unwrap();
    let m = &out.metrics;
    assert!(m.failure.is_none(), "{:?}", m.failure);
    let net = m.net_tangential_mm.unwrap();
    assert!((net - 100.0).abs() < 1.0, "{net}");
    assert!(m.mean_depth_error_mm.unwrap() < 0.5);
}

#[test]
fn still_leader_with_ideal_perception_settles_on_the_reference() {
    let mut sc = Scenario::track();
    sc.task = Task::Track { motion: LeaderMotion::Still };
    sc.perception = Perception::Ideal;
    sc.duration = 20.0;
    let out = run_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(44)).unwrap();
    let m = &out.metrics;
    assert!(m.mean_pose_error_mm.unwrap() < 1e-3, "{:?}", m.mean_pose_error_mm);
    assert!(m.mean_pose_error_deg.unwrap() < 1e-3, "{:?}", m.mean_pose_error_deg);
}

#[test]
fn tall_object_topples_without_a_stabiliser() {
    let sc = Scenario::push_single("tall_square").unwrap();
    let out = run_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(45)).unwrap();
    assert_eq!(out.metrics.toppled, Some(true));
    assert_eq!(out.metrics.terminated, Some(false));
    let dual = run_scenario(&Scenario::push_dual("tall_square").unwrap(), &mut ChaCha8Rng::seed_from_u64(45)).unwrap();
    assert_eq!(dual.metrics.toppled, Some(false));
    assert_eq!(dual.metrics.terminated, Some(true));
}

#[test]
fn same_seed_same_bytes() {
    let scenarios = [
        Scenario::track(),
        Scenario::follow(SurfaceKind::hemisphere()),
        Scenario::push_dual("circle").unwrap(),
    ];
    for sc in scenarios {
        let render = |seed: u64| {
            let out = run_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let mut csv = Vec::new();
            out.log.write_csv(&mut csv).unwrap();
            let mut json = Vec::new();
            out.metrics.write_json(&mut json).unwrap();
            (csv, json)
        };
        let a = render(7);
        assert_eq!(a, render(7));
        assert_ne!(a.0, render(8).0);
    }
}

#[test]
fn trajectory_header_and_row_width() {
    let mut sc = Scenario::track();
    sc.duration = 0.2;
    sc.transient = 0.0;
    let out = run_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(46)).unwrap();
    let mut buf = Vec::new();
    out.log.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), TRAJECTORY_COLUMNS.join(","));
    for line in lines {
        assert_eq!(line.split(',').count(), TRAJECTORY_COLUMNS.len());
    }
}

#[test]
fn steering_reverses_at_the_sign_flip_radius() {
    // A small sideways push changes the bearing by (1/z - alpha/r0) * dy.
    let (alpha, r0) = (0.7, 40.0);
    let flip = r0 / alpha;
    let gain = |z: f64| {
        let obj = PushedObject::new(0.0, z, alpha, r0).unwrap();
        let dy = 1e-4;
        let moved = push_object_step(&obj, (dy, 0.0)).unwrap();
        (moved.bearing() - obj.bearing()) / dy
    };
    assert!(gain(0.5 * flip) > 0.0);
    assert!(gain(2.0 * flip) < 0.0);
    let (mut lo, mut hi) = (0.5 * flip, 2.0 * flip);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if gain(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((0.5 * (lo + hi) - flip).abs() / flip < 1e-6);
}

#[test]
fn bearing_partials_match_finite_differences() {
    let obj = PushedObject::new(37.0, 210.0, 0.6, 35.0).unwrap();
    let s = bearing_sensitivity(&obj).unwrap();
    let h = 1e-5;
    let at = |y: f64, z: f64, phi: f64| PushedObject { y, z, phi, ..obj }.bearing();
    let fd_y = (at(obj.y + h, obj.z, 0.0) - at(obj.y - h, obj.z, 0.0)) / (2.0 * h);
    let fd_z = (at(obj.y, obj.z + h, 0.0) - at(obj.y, obj.z - h, 0.0)) / (2.0 * h);
    let fd_phi = (at(obj.y, obj.z, h) - at(obj.y, obj.z, -h)) / (2.0 * h);
    assert!(((fd_y - s.d_y) / s.d_y).abs() < 1e-6);
    assert!(((fd_z - s.d_z) / s.d_z).abs() < 1e-6);
    assert!(((fd_phi - s.d_phi) / s.d_phi).abs() < 1e-6);
}

#[test]
fn hemisphere_contact_reports_depth_and_tilt() {
    let surface = SurfaceModel::new(SurfaceKind::hemisphere(), Pose::identity()).unwrap();
    let sensor = sensor_pose_at(&surface, &nalgebra::Vector3::zeros(), 2.0, &nalgebra::Vector3::x()).unwrap();
    let c = contact_pose(&surface, &sensor).unwrap();
    assert!((c.depth - 2.0).abs() < 1e-9);
    assert!(c.normal_angle.abs() < 1e-9);
    // Pull the tip back out of the surface: no contact.
    let away = sensor * tactile_core::liegroup::exp(&Twist::from_array([0.0, 0.0, -(TIP_RADIUS), 0.0, 0.0, 0.0]));
    assert!(matches!(contact_pose(&surface, &away), Err(SimError::NoContact(_))));
}

#[test]
fn generated_labels_are_surface_poses() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let rows = generate_dataset(50, &tactile_core::gdnmath::SampleSpec::default(), &mut rng).unwrap();
    for r in rows {
        let want = log(&euler_to_pose(&r.euler).inverse()).unwrap();
        assert!((r.label.as_vector() - want.as_vector()).norm() < 1e-9);
    }
}
