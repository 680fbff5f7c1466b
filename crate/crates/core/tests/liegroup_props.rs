use nalgebra::{Matrix4, Matrix6, Vector6};
use proptest::prelude::*;

use tactile_core::liegroup::*;

/// Matrix exponential by scaling and squaring of a plain Taylor series.
fn expm_series(m: &Matrix4<f64>) -> Matrix4<f64> {
    let squarings = (m.norm().max(1.0).log2().ceil() as i32 + 4).max(0);
    let a = m / 2f64.powi(squarings);
    let mut term = Matrix4::identity();
    let mut sum = term;
    for k in 1..30 {
        term = term * a / k as f64;
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

fn twist(max_rot: f64, max_trans: f64) -> impl Strategy<Value = Twist> {
    (
        prop::array::uniform3(-max_trans..max_trans),
        prop::array::uniform3(-1.0f64..1.0),
        0.0..max_rot,
    )
        .prop_map(|(rho, axis, angle)| {
            let a = nalgebra::Vector3::from(axis);
            let phi = if a.norm() < 1e-9 { a } else { a.normalize() * angle };
            Twist::new(nalgebra::Vector3::from(rho), phi)
        })
}

fn pose_err(a: &Pose, b: &Pose) -> f64 {
    (a.to_matrix() - b.to_matrix()).norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn exp_matches_the_series_oracle(xi in twist(3.0, 50.0)) {
        let closed = exp(&xi).to_matrix();
        let series = expm_series(&hat(&xi));
        prop_assert!((closed - series).norm() < 1e-9 * (1.0 + xi.norm()), "{}", (closed - series).norm());
    }

    #[test]
    fn log_inverts_exp(xi in twist(std::f64::consts::PI - 1e-3, 100.0)) {
        let back = log(&exp(&xi)).unwrap();
        prop_assert!((back.as_vector() - xi.as_vector()).norm() < 1e-9);
    }

    #[test]
    fn exp_inverts_log(xi in twist(3.1, 100.0)) {
        let p = exp(&xi);
        let q = exp(&log(&p).unwrap());
        prop_assert!(pose_err(&p, &q) < 1e-9);
    }

    #[test]
    fn adjoint_is_a_homomorphism(a in twist(3.0, 50.0), b in twist(3.0, 50.0)) {
        let (x, y) = (exp(&a), exp(&b));
        let lhs = (x * y).adjoint();
        let rhs = x.adjoint() * y.adjoint();
        prop_assert!((lhs - rhs).norm() < 1e-9 * (1.0 + lhs.norm()));
    }

    #[test]
    fn adjoint_moves_twists_through_exp(p in twist(3.0, 50.0), xi in twist(3.0, 20.0)) {
        let x = exp(&p);
        let lhs = x * exp(&xi) * x.inverse();
        let rhs = exp(&Twist::from_vector(x.adjoint() * xi.as_vector()));
        prop_assert!(pose_err(&lhs, &rhs) < 1e-9 * (1.0 + xi.norm() + p.norm()));
    }

    #[test]
    fn hat_vee_roundtrip(xi in twist(3.0, 50.0)) {
        prop_assert_eq!(vee(&hat(&xi)).unwrap(), xi);
    }

    #[test]
    fn exact_jacobians_are_inverse(xi in twist(2.5, 20.0)) {
        let prod = left_jacobian_exact(&xi) * inv_left_jacobian_exact(&xi);
        prop_assert!((prod - Matrix6::identity()).norm() < 1e-9);
    }

    #[test]
    fn jacobian_determinant_closed_form(xi in twist(3.0, 20.0)) {
        let det = left_jacobian_exact(&xi).determinant();
        prop_assert!((det - left_jacobian_det(&xi)).abs() < 1e-9);
    }

    #[test]
    fn jacobian_is_the_derivative_of_exp(xi in twist(2.0, 10.0), dir in prop::array::uniform6(-1.0f64..1.0)) {
        // exp(xi + h d) ~ exp(h J d) exp(xi)
        let d = Vector6::from(dir);
        let h = 1e-6;
        let moved = exp(&Twist::from_vector(xi.as_vector() + d * h));
        let lhs = log(&(moved * exp(&xi).inverse())).unwrap();
        let rhs = left_jacobian_exact(&xi) * d * h;
        prop_assert!((lhs.as_vector() - rhs).norm() < 1e-9 * (1.0 + xi.norm()));
    }

    #[test]
    fn euler_roundtrip(e in (prop::array::uniform3(-100.0f64..100.0), -3.1f64..3.1, -1.5f64..1.5, -3.1f64..3.1)) {
        let (t, a, b, g) = e;
        let row = [t[0], t[1], t[2], a, b, g];
        let back = pose_to_euler(&euler_to_pose(&row)).unwrap();
        for j in 0..6 {
            prop_assert!((back[j] - row[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn bch_error_is_second_order(a in twist(1.0, 5.0), b in twist(1.0, 5.0)) {
        let exact = |s: f64| {
            let small = Twist::from_vector(a.as_vector() * s);
            log(&(exp(&small) * exp(&b))).unwrap()
        };
        let err = |s: f64| {
            let small = Twist::from_vector(a.as_vector() * s);
            (bch_compose(&small, &b, SmallArg::First).unwrap().as_vector() - exact(s).as_vector()).norm()
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        // Halving the small argument should quarter the error, up to rounding.
        prop_assert!(e2 <= 0.3 * e1 + 1e-12, "{e1} -> {e2}");
    }
}

#[test]
fn log_rejects_non_rotations() {
    let mut m = Matrix4::identity();
    m[(0, 0)] = 2.0;
    assert!(Pose::try_from_matrix(&m).is_err());
}

#[test]
fn second_order_jacobians_converge_to_the_exact_ones() {
    let xi = Twist::from_array([1.0, -2.0, 0.5, 0.05, -0.02, 0.03]);
    let exact = left_jacobian_exact(&xi);
    let e2 = (left_jacobian(&xi, 2) - exact).norm();
    let e6 = (left_jacobian(&xi, 6) - exact).norm();
    assert!(e6 < e2 && e6 < 1e-8);
    assert!((inv_left_jacobian(&xi) * exact - Matrix6::identity()).norm() < 1e-3);
}
