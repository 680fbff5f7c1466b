//! Rigid transforms in SE(3) and the matching Lie algebra se(3).
//!
//! Twists are ordered translation first, rotation second: `(rho, phi)`.
//! Lengths are millimetres and angles radians.

use std::fmt;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix4, Matrix6, Rotation3, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

/// Rotation angles closer than this to pi have no unique logarithm.
pub const LOG_PI_MARGIN: f64 = 1e-6;
/// Pitch angles closer than this to +-pi/2 are treated as gimbal lock.
pub const GIMBAL_MARGIN: f64 = 1e-6;
/// Tolerance used when checking the block structure of se(3) matrices.
pub const HAT_TOLERANCE: f64 = 1e-9;
/// Largest norm accepted for the "small" argument of [`bch_compose`].
pub const BCH_SMALL_LIMIT: f64 = 0.5;
/// Truncation order used by [`left_jacobian`] callers that have no reason to pick another.
pub const DEFAULT_JACOBIAN_ORDER: usize = 2;

// Below this angle the trigonometric coefficients switch to Taylor series.
const SERIES_ANGLE: f64 = 1e-2;
// Above this angle the rotation axis is recovered from the symmetric part.
const NEAR_PI_ANGLE: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("matrix is not an element of se(3): {0}")]
    NotInAlgebra(&'static str),
    #[error("matrix is not a rigid transform: {0}")]
    NotRigid(&'static str),
    #[error("rotation angle {angle} is within {LOG_PI_MARGIN} of pi, the logarithm is ambiguous")]
    NearPi { angle: f64 },
    #[error("small argument has norm {norm}, above the BCH limit {BCH_SMALL_LIMIT}")]
    OutsideBchDomain { norm: f64 },
    #[error("pitch {pitch} rad is at gimbal lock")]
    GimbalLock { pitch: f64 },
}

/// Exponential coordinates of SE(3), or a body velocity: `(rho, phi)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Twist(Vector6<f64>);

impl Twist {
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self(Vector6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z))
    }

    pub fn zero() -> Self {
        Self(Vector6::zeros())
    }

    pub fn from_vector(v: Vector6<f64>) -> Self {
        Self(v)
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self(Vector6::from(a))
    }

    pub fn rho(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn phi(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn as_vector(&self) -> &Vector6<f64> {
        &self.0
    }

    pub fn to_array(&self) -> [f64; 6] {
        self.0.into()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn exp(&self) -> Pose {
        exp(self)
    }
}

impl From<Vector6<f64>> for Twist {
    fn from(v: Vector6<f64>) -> Self {
        Self(v)
    }
}

impl From<Twist> for Vector6<f64> {
    fn from(t: Twist) -> Self {
        t.0
    }
}

impl Add for Twist {
    type Output = Twist;
    fn add(self, rhs: Twist) -> Twist {
        Twist(self.0 + rhs.0)
    }
}

impl AddAssign for Twist {
    fn add_assign(&mut self, rhs: Twist) {
        self.0 += rhs.0;
    }
}

impl Sub for Twist {
    type Output = Twist;
    fn sub(self, rhs: Twist) -> Twist {
        Twist(self.0 - rhs.0)
    }
}

impl Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist(-self.0)
    }
}

impl Mul<f64> for Twist {
    type Output = Twist;
    fn mul(self, k: f64) -> Twist {
        Twist(self.0 * k)
    }
}

impl Mul<Twist> for Matrix6<f64> {
    type Output = Twist;
    fn mul(self, t: Twist) -> Twist {
        Twist(self * t.0)
    }
}

impl Index<usize> for Twist {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A rigid transform with rotation `C` and translation `r` (mm).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from parts. The rotation is trusted to be orthonormal.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        debug_assert!(orthonormality_error(&rotation) < 1e-6);
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::from_parts(Matrix3::identity(), translation)
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self::from_parts(rotation, Vector3::zeros())
    }

    /// Checked conversion from a homogeneous matrix.
    pub fn try_from_matrix(m: &Matrix4<f64>) -> Result<Self, LieError> {
        let bottom = m.fixed_view::<1, 4>(3, 0);
        if (bottom - nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0)).amax() > HAT_TOLERANCE {
            return Err(LieError::NotRigid("bottom row must be (0, 0, 0, 1)"));
        }
        let rotation: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        if orthonormality_error(&rotation) > HAT_TOLERANCE || rotation.determinant() < 0.0 {
            return Err(LieError::NotRigid("rotation block is not in SO(3)"));
        }
        Ok(Self {
            rotation,
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn log(&self) -> Result<Twist, LieError> {
        log(self)
    }

    pub fn adjoint(&self) -> Matrix6<f64> {
        adjoint(self)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        let s = vee3(&(self.rotation - self.rotation.transpose())).norm() / 2.0;
        s.atan2(c)
    }

    /// Projects the rotation back onto SO(3) (Gram-Schmidt on the columns).
    pub fn orthonormalized(&self) -> Self {
        let x = self.rotation.column(0).normalize();
        let y = (self.rotation.column(1) - x * x.dot(&self.rotation.column(1))).normalize();
        let z = x.cross(&y);
        Self {
            rotation: Matrix3::from_columns(&[x, y, z]),
            translation: self.translation,
        }
    }

    /// Unit quaternion `(w, x, y, z)` of the rotation.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation));
        [q.w, q.i, q.j, q.k]
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        &self * &rhs
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.translation;
        let q = self.quaternion();
        write!(
            f,
            "t=({:.4}, {:.4}, {:.4}) q=({:.5}, {:.5}, {:.5}, {:.5})",
            t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        )
    }
}

/// Largest entry of `R^T R - I`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Skew-symmetric matrix with `hat3(a) * b = a x b`.
pub fn hat3(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat3`]; reads the lower-triangle entries without checking symmetry.
pub fn vee3(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

pub fn hat(xi: &Twist) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat3(&xi.phi()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.rho());
    m
}

pub fn vee(m: &Matrix4<f64>) -> Result<Twist, LieError> {
    if m.fixed_view::<1, 4>(3, 0).amax() > HAT_TOLERANCE {
        return Err(LieError::NotInAlgebra("bottom row must be zero"));
    }
    let w: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    if (w + w.transpose()).amax() > HAT_TOLERANCE {
        return Err(LieError::NotInAlgebra("rotation block must be skew-symmetric"));
    }
    Ok(Twist::new(m.fixed_view::<3, 1>(0, 3).into_owned(), vee3(&w)))
}

// Coefficients of exp on SO(3): sin(t)/t, (1-cos t)/t^2, (t-sin t)/t^3.
fn so3_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        (
            1.0 - t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0)),
            0.5 - t2 / 24.0 * (1.0 - t2 / 30.0 * (1.0 - t2 / 56.0)),
            1.0 / 6.0 - t2 / 120.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0)),
        )
    } else {
        let half = (theta / 2.0).sin();
        (
            theta.sin() / theta,
            2.0 * half * half / (theta * theta),
            (theta - theta.sin()) / (theta * theta * theta),
        )
    }
}

// Coefficient of phi^2 in the inverse SO(3) left Jacobian: (1 - (t/2) cot(t/2)) / t^2.
fn so3_inverse_coefficient(theta: f64) -> f64 {
    if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1_209_600.0
    } else {
        let h = theta / 2.0;
        (1.0 - h * h.cos() / h.sin()) / (theta * theta)
    }
}

/// Rotation matrix `exp(phi^)`.
pub fn exp_so3(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let (a, b, _) = so3_coefficients(theta);
    let w = hat3(phi);
    Matrix3::identity() + w * a + w * w * b
}

/// Left Jacobian of SO(3) in closed form.
pub fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let (_, b, c) = so3_coefficients(theta);
    let w = hat3(phi);
    Matrix3::identity() + w * b + w * w * c
}

/// Inverse of [`so3_left_jacobian`] in closed form.
pub fn so3_inv_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let w = hat3(phi);
    Matrix3::identity() - w * 0.5 + w * w * so3_inverse_coefficient(theta)
}

/// Rotation vector of `r`, rejecting angles within [`LOG_PI_MARGIN`] of pi.
pub fn log_so3(r: &Matrix3<f64>) -> Result<Vector3<f64>, LieError> {
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let s = vee3(&(r - r.transpose())) / 2.0;
    let sin = s.norm();
    let theta = sin.atan2(cos);
    if theta > std::f64::consts::PI - LOG_PI_MARGIN {
        return Err(LieError::NearPi { angle: theta });
    }
    if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        let k = 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0 + 31.0 * t2 * t2 * t2 / 15120.0;
        return Ok(s * k);
    }
    if theta > NEAR_PI_ANGLE {
        // sin(theta) is tiny here, so take the axis from (1 - cos) a a^T instead.
        let sym = (r + r.transpose()) / 2.0 - Matrix3::identity() * cos;
        let i = (0..3)
            .max_by(|&a, &b| sym[(a, a)].total_cmp(&sym[(b, b)]))
            .unwrap_or(0);
        let mut axis = sym.column(i).into_owned() / (sym[(i, i)] * (1.0 - cos)).sqrt();
        axis.normalize_mut();
        if axis.dot(&s) < 0.0 {
            axis = -axis;
        }
        return Ok(axis * theta);
    }
    Ok(s * (theta / sin))
}

/// The exponential map `exp(xi^)`, in closed form.
pub fn exp(xi: &Twist) -> Pose {
    let phi = xi.phi();
    let theta = phi.norm();
    let (a, b, c) = so3_coefficients(theta);
    let w = hat3(&phi);
    let w2 = w * w;
    let rotation = Matrix3::identity() + w * a + w2 * b;
    let v = Matrix3::identity() + w * b + w2 * c;
    Pose {
        rotation,
        translation: v * xi.rho(),
    }
}

/// The principal-branch logarithm of a pose.
pub fn log(p: &Pose) -> Result<Twist, LieError> {
    let phi = log_so3(&p.rotation)?;
    let rho = so3_inv_left_jacobian(&phi) * p.translation;
    Ok(Twist::new(rho, phi))
}

/// Group adjoint `[C, r^ C; 0, C]`.
pub fn adjoint(p: &Pose) -> Matrix6<f64> {
    let c = p.rotation;
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&c);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(hat3(&p.translation) * c));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&c);
    m
}

/// Algebra adjoint `[phi^, rho^; 0, phi^]`.
pub fn ad(xi: &Twist) -> Matrix6<f64> {
    let w = hat3(&xi.phi());
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&w);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&hat3(&xi.rho()));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&w);
    m
}

/// Left Jacobian series `sum_{n=0}^{order} ad(xi)^n / (n+1)!`.
pub fn left_jacobian(xi: &Twist, order: usize) -> Matrix6<f64> {
    let a = ad(xi);
    let mut term = Matrix6::identity();
    let mut sum = term;
    for n in 1..=order {
        term = term * a / (n as f64 + 1.0);
        sum += term;
    }
    sum
}

/// Left Jacobian summed until the terms stop contributing.
pub fn left_jacobian_exact(xi: &Twist) -> Matrix6<f64> {
    let a = ad(xi);
    let mut term = Matrix6::identity();
    let mut sum = term;
    for n in 1..200 {
        term = term * a / (n as f64 + 1.0);
        sum += term;
        if term.amax() <= f64::EPSILON * 1e-2 * sum.amax() {
            break;
        }
    }
    sum
}

/// Second-order inverse left Jacobian `I - ad/2 + ad^2/12`.
pub fn inv_left_jacobian(xi: &Twist) -> Matrix6<f64> {
    let a = ad(xi);
    Matrix6::identity() - a * 0.5 + a * a / 12.0
}

/// Inverse of [`left_jacobian_exact`], using its block-triangular structure.
pub fn inv_left_jacobian_exact(xi: &Twist) -> Matrix6<f64> {
    let j = left_jacobian_exact(xi);
    let q: Matrix3<f64> = j.fixed_view::<3, 3>(0, 3).into_owned();
    let jinv = so3_inv_left_jacobian(&xi.phi());
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&jinv);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-jinv * q * jinv));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&jinv);
    m
}

/// Determinant of the exact left Jacobian: `(sin(t/2) / (t/2))^4`.
pub fn left_jacobian_det(xi: &Twist) -> f64 {
    let h = xi.phi().norm() / 2.0;
    let s = if h < SERIES_ANGLE {
        1.0 - h * h / 6.0 + h.powi(4) / 120.0
    } else {
        h.sin() / h
    };
    s.powi(4)
}

/// Which argument of [`bch_compose`] is the small one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmallArg {
    First,
    Second,
}

/// First-order approximation of `log(exp(xi1) exp(xi2))` when one argument is small.
pub fn bch_compose(xi1: &Twist, xi2: &Twist, small: SmallArg) -> Result<Twist, LieError> {
    let flagged = match small {
        SmallArg::First => xi1,
        SmallArg::Second => xi2,
    };
    let norm = flagged.norm();
    if norm > BCH_SMALL_LIMIT {
        return Err(LieError::OutsideBchDomain { norm });
    }
    Ok(match small {
        SmallArg::First => inv_left_jacobian_exact(xi2) * *xi1 + *xi2,
        SmallArg::Second => *xi1 + inv_left_jacobian_exact(&-*xi1) * *xi2,
    })
}

/// Pose from `(x, y, z, alpha, beta, gamma)` with extrinsic-xyz angles:
/// `R = Rz(gamma) Ry(beta) Rx(alpha)`.
pub fn euler_to_pose(e: &[f64; 6]) -> Pose {
    let (sa, ca) = e[3].sin_cos();
    let (sb, cb) = e[4].sin_cos();
    let (sg, cg) = e[5].sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ca, -sa, 0.0, sa, ca);
    let ry = Matrix3::new(cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb);
    let rz = Matrix3::new(cg, -sg, 0.0, sg, cg, 0.0, 0.0, 0.0, 1.0);
    Pose::from_parts(rz * ry * rx, Vector3::new(e[0], e[1], e[2]))
}

/// Inverse of [`euler_to_pose`].
pub fn pose_to_euler(p: &Pose) -> Result<[f64; 6], LieError> {
    let r = &p.rotation;
    let beta = (-r[(2, 0)]).atan2(r[(0, 0)].hypot(r[(1, 0)]));
    if std::f64::consts::FRAC_PI_2 - beta.abs() < GIMBAL_MARGIN {
        return Err(LieError::GimbalLock { pitch: beta });
    }
    let alpha = r[(2, 1)].atan2(r[(2, 2)]);
    let gamma = r[(1, 0)].atan2(r[(0, 0)]);
    let t = &p.translation;
    Ok([t.x, t.y, t.z, alpha, beta, gamma])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn matrix_exp_series(m: &Matrix4<f64>, terms: usize) -> Matrix4<f64> {
        let mut term = Matrix4::identity();
        let mut sum = term;
        for n in 1..terms {
            term = term * m / n as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn hat_of_unit_x_rotation() {
        let m = hat(&Twist::from_array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
        let expected = Matrix4::new(
            0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, -1.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0,
        );
        assert_eq!(m, expected);
        assert_eq!(hat(&Twist::zero()), Matrix4::zeros());
    }

    #[test]
    fn vee_inverts_hat_and_rejects_symmetric_blocks() {
        let xi = Twist::from_array([1.0, 2.0, 3.0, 0.1, 0.2, 0.3]);
        assert_eq!(vee(&hat(&xi)).unwrap(), xi);
        assert_eq!(vee(&Matrix4::zeros()).unwrap(), Twist::zero());
        let mut m = Matrix4::zeros();
        m[(0, 1)] = 1.0;
        m[(1, 0)] = 1.0;
        assert!(matches!(vee(&m), Err(LieError::NotInAlgebra(_))));
    }

    #[test]
    fn exp_quarter_turn_matches_series() {
        let xi = Twist::from_array([0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2]);
        let p = exp(&xi);
        let series = matrix_exp_series(&hat(&xi), 30);
        assert!((p.to_matrix() - series).amax() < 1e-12);
        let rz = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((p.rotation() - rz).amax() < 1e-15);
        assert_eq!(*p.translation(), Vector3::zeros());
    }

    #[test]
    fn exp_of_pure_translation() {
        let p = exp(&Twist::from_array([1.0, 2.0, 3.0, 0.0, 0.0, 0.0]));
        assert_eq!(*p.rotation(), Matrix3::identity());
        assert_eq!(*p.translation(), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(exp(&Twist::zero()), Pose::identity());
    }

    #[test]
    fn exp_agrees_with_series_across_angles() {
        for &angle in &[1e-9, 1e-5, 5e-3, 1e-2, 0.2, 1.0, 2.5, 3.0] {
            let axis = Vector3::new(0.3, -0.5, 0.8).normalize();
            let xi = Twist::new(Vector3::new(4.0, -2.0, 7.0), axis * angle);
            let series = matrix_exp_series(&hat(&xi), 60);
            assert!((exp(&xi).to_matrix() - series).amax() < 1e-9, "angle {angle}");
        }
    }

    #[test]
    fn log_of_identity_and_half_turn() {
        assert_eq!(log(&Pose::identity()).unwrap(), Twist::zero());
        let half = exp(&Twist::from_array([0.0, 0.0, 0.0, PI, 0.0, 0.0]));
        assert!(matches!(log(&half), Err(LieError::NearPi { .. })));
    }

    #[test]
    fn log_recovers_angles_close_to_pi() {
        let axis = Vector3::new(1.0, 2.0, -2.0).normalize();
        for &angle in &[3.0, 3.1, PI - 1e-4] {
            let xi = Twist::new(Vector3::new(1.0, 1.0, 1.0), axis * angle);
            let back = log(&exp(&xi)).unwrap();
            assert!((back - xi).norm() < 1e-8, "angle {angle}: {}", (back - xi).norm());
        }
    }

    #[test]
    fn adjoint_of_identity_and_translation() {
        assert_eq!(adjoint(&Pose::identity()), Matrix6::identity());
        let a = adjoint(&Pose::from_translation(Vector3::new(1.0, 0.0, 0.0)));
        let mut expected = Matrix6::identity();
        expected.fixed_view_mut::<3, 3>(0, 3).copy_from(&hat3(&Vector3::x()));
        assert_eq!(a, expected);
    }

    #[test]
    fn ad_blocks() {
        assert_eq!(ad(&Twist::zero()), Matrix6::zeros());
        let a = ad(&Twist::from_array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0]));
        let w = hat3(&Vector3::z());
        assert_eq!(a.fixed_view::<3, 3>(0, 0), w);
        assert_eq!(a.fixed_view::<3, 3>(3, 3), w);
        assert_eq!(a.fixed_view::<3, 3>(0, 3), Matrix3::zeros());
    }

    #[test]
    fn adjoint_is_matrix_exponential_of_ad() {
        let xi = Twist::from_array([0.02, -0.01, 0.03, 0.01, 0.02, -0.015]);
        let a = ad(&xi);
        let mut term = Matrix6::identity();
        let mut sum = term;
        for n in 1..25 {
            term = term * a / n as f64;
            sum += term;
        }
        assert!((adjoint(&exp(&xi)) - sum).amax() < 1e-6);
    }

    #[test]
    fn jacobian_truncation_orders() {
        assert_eq!(left_jacobian(&Twist::zero(), 2), Matrix6::identity());
        assert_eq!(inv_left_jacobian(&Twist::zero()), Matrix6::identity());
        let xi = Twist::from_array([0.05, -0.03, 0.04, 0.02, -0.06, 0.05]);
        // The dropped tail starts at ad^3 / 24, so the gap scales with |xi|^3.
        for &scale in &[0.05, 0.1] {
            let xi = xi * (scale / xi.norm());
            let gap = (left_jacobian(&xi, 2) - left_jacobian(&xi, 12)).amax();
            assert!(gap < scale * scale * scale / 20.0, "scale {scale}: {gap}");
            if scale <= 0.05 {
                assert!(gap < 1e-5);
            }
        }
        let xi = xi * (0.1 / xi.norm());
        let j2 = left_jacobian(&xi, 2);
        let j12 = left_jacobian(&xi, 12);
        let numeric_inverse = j12.try_inverse().unwrap();
        assert!((inv_left_jacobian(&xi) - numeric_inverse).amax() < 1e-6);
        let residual = (j2 * inv_left_jacobian(&xi) - Matrix6::identity()).amax();
        assert!(residual < 0.1f64.powi(3));
    }

    #[test]
    fn first_order_inverse_coefficient_is_minus_half() {
        // With a nilpotent ad (pure translation), only the linear term survives.
        let xi = Twist::from_array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let a = ad(&xi);
        assert_eq!(inv_left_jacobian(&xi) - Matrix6::identity(), a * -0.5);
    }

    #[test]
    fn exact_jacobian_matches_closed_form_blocks() {
        let xi = Twist::from_array([3.0, -1.0, 2.0, 0.4, -0.9, 1.3]);
        let j = left_jacobian_exact(&xi);
        let jso3 = so3_left_jacobian(&xi.phi());
        assert!((j.fixed_view::<3, 3>(0, 0) - jso3).amax() < 1e-13);
        assert!((j.fixed_view::<3, 3>(3, 3) - jso3).amax() < 1e-13);
        let inv = inv_left_jacobian_exact(&xi);
        assert!((j * inv - Matrix6::identity()).amax() < 1e-12);
        assert!((left_jacobian_det(&xi) - j.determinant()).abs() < 1e-12);
    }

    #[test]
    fn bch_with_zero_arguments() {
        let xi = Twist::from_array([1.0, -2.0, 0.5, 0.3, 0.1, -0.2]);
        let r = bch_compose(&Twist::zero(), &xi, SmallArg::First).unwrap();
        assert!((r - xi).norm() < 1e-15);
        let z = bch_compose(&Twist::zero(), &Twist::zero(), SmallArg::Second).unwrap();
        assert_eq!(z, Twist::zero());
        let big = Twist::from_array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            bch_compose(&big, &xi, SmallArg::First),
            Err(LieError::OutsideBchDomain { .. })
        ));
    }

    #[test]
    fn bch_close_to_exact_log_for_small_arguments() {
        let large = Twist::from_array([2.0, -1.0, 0.5, 0.4, -0.3, 0.8]);
        let dir = Twist::from_array([0.3, 0.5, -0.2, 0.6, -0.4, 0.2]);
        let small = dir * (0.01 / dir.norm());
        let exact = log(&(exp(&small) * exp(&large))).unwrap();
        let approx = bch_compose(&small, &large, SmallArg::First).unwrap();
        assert!((exact - approx).norm() < 1e-4);
        let exact = log(&(exp(&large) * exp(&small))).unwrap();
        let approx = bch_compose(&large, &small, SmallArg::Second).unwrap();
        assert!((exact - approx).norm() < 1e-4);
    }

    #[test]
    fn euler_single_axis_and_gimbal_lock() {
        assert_eq!(euler_to_pose(&[0.0; 6]), Pose::identity());
        let p = euler_to_pose(&[0.0, 0.0, 0.0, FRAC_PI_2, 0.0, 0.0]);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!((p.rotation() - rx).amax() < 1e-15);
        let locked = euler_to_pose(&[0.0, 0.0, 0.0, 0.1, FRAC_PI_2, 0.2]);
        assert!(matches!(pose_to_euler(&locked), Err(LieError::GimbalLock { .. })));
    }

    #[test]
    fn euler_order_is_extrinsic_xyz() {
        let e = [1.0, 2.0, 3.0, 0.3, -0.2, 0.5];
        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), e[3]);
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), e[4]);
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), e[5]);
        let expected = (rz * ry * rx).into_inner();
        assert!((euler_to_pose(&e).rotation() - expected).amax() < 1e-15);
    }

    #[test]
    fn orthonormalize_repairs_drift() {
        let mut p = exp(&Twist::from_array([1.0, 2.0, 3.0, 0.3, 0.2, 0.1]));
        p.rotation[(0, 1)] += 1e-6;
        assert!(orthonormality_error(p.rotation()) > 1e-7);
        let q = p.orthonormalized();
        assert!(orthonormality_error(q.rotation()) < 1e-15);
        assert!((q.rotation() - p.rotation()).amax() < 2e-6);
    }

    #[test]
    fn matrix_roundtrip_and_rejection() {
        let p = exp(&Twist::from_array([1.0, 2.0, 3.0, 0.3, 0.2, 0.1]));
        assert_eq!(Pose::try_from_matrix(&p.to_matrix()).unwrap(), p);
        let mut m = p.to_matrix();
        m[(0, 0)] *= 2.0;
        assert!(Pose::try_from_matrix(&m).is_err());
    }
}
