//! Surface geometry and the contact-pose model of a spherical sensor tip.

use nalgebra::{Matrix3, Vector3};

use super::SimError;
use crate::liegroup::Pose;

/// Radius of the sensor tip (mm); its centre is the sensor frame origin.
pub const TIP_RADIUS: f64 = 20.0;
/// Largest contact depth (mm) the sensor can read.
pub const MAX_DEPTH: f64 = 10.0;
/// Largest tilt between the sensor axis and the surface normal that still reads as contact.
pub const MAX_TILT_DEG: f64 = 45.0;
pub const DEFAULT_RAMP_RADIUS: f64 = 300.0;
pub const DEFAULT_RAMP_SPAN_DEG: f64 = 60.0;
pub const DEFAULT_HEMISPHERE_RADIUS: f64 = 60.0;

/// Shape of a surface in its own body frame. Every shape touches the body origin
/// with outward normal `+z` there.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SurfaceKind {
    /// The plane `z = 0`.
    Flat,
    /// Convex cylindrical arc, axis along body `x`, spanning `span_deg` centred on the origin.
    Ramp { radius: f64, span_deg: f64 },
    /// Upper half of a sphere with its apex at the origin.
    Hemisphere { radius: f64 },
}

impl SurfaceKind {
    pub fn ramp() -> Self {
        Self::Ramp {
            radius: DEFAULT_RAMP_RADIUS,
            span_deg: DEFAULT_RAMP_SPAN_DEG,
        }
    }

    pub fn hemisphere() -> Self {
        Self::Hemisphere {
            radius: DEFAULT_HEMISPHERE_RADIUS,
        }
    }
}

/// A surface placed in the world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceModel {
    pub kind: SurfaceKind,
    /// Body frame in world coordinates.
    pub pose: Pose,
}

/// Closest surface point to a query point, in body coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    /// Distance from the surface along the outward normal.
    pub signed_distance: f64,
}

impl SurfaceModel {
    pub fn new(kind: SurfaceKind, pose: Pose) -> Result<Self, SimError> {
        let ok = match kind {
            SurfaceKind::Flat => true,
            SurfaceKind::Ramp { radius, span_deg } => radius > 0.0 && span_deg > 0.0 && span_deg < 180.0,
            SurfaceKind::Hemisphere { radius } => radius > 0.0,
        };
        if !ok {
            return Err(SimError::InvalidScenario(format!("bad surface parameters {kind:?}")));
        }
        Ok(Self { kind, pose })
    }

    /// Projects a body-frame point onto the surface.
    pub fn project(&self, p: &Vector3<f64>) -> Result<Projection, SimError> {
        match self.kind {
            SurfaceKind::Flat => Ok(Projection {
                point: Vector3::new(p.x, p.y, 0.0),
                normal: Vector3::z(),
                signed_distance: p.z,
            }),
            SurfaceKind::Ramp { radius, span_deg } => {
                let radial = Vector3::new(0.0, p.y, p.z + radius);
                let len = radial.norm();
                if len == 0.0 {
                    return Err(SimError::NoContact("on the ramp axis".into()));
                }
                let normal = radial / len;
                if normal.y.atan2(normal.z).abs() > span_deg.to_radians() / 2.0 {
                    return Err(SimError::NoContact("beyond the ramp ends".into()));
                }
                Ok(Projection {
                    point: Vector3::new(p.x, 0.0, -radius) + normal * radius,
                    normal,
                    signed_distance: len - radius,
                })
            }
            SurfaceKind::Hemisphere { radius } => {
                let centre = Vector3::new(0.0, 0.0, -radius);
                let radial = p - centre;
                let len = radial.norm();
                if len == 0.0 {
                    return Err(SimError::NoContact("at the hemisphere centre".into()));
                }
                let normal = radial / len;
                if normal.z < 0.0 {
                    return Err(SimError::NoContact("below the hemisphere rim".into()));
                }
                Ok(Projection {
                    point: centre + normal * radius,
                    normal,
                    signed_distance: len - radius,
                })
            }
        }
    }
}

/// Limits beyond which the contact slips and the anchor is dragged along.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlipLimits {
    pub shear_mm: f64,
    pub spin_deg: f64,
}

impl Default for SlipLimits {
    fn default() -> Self {
        Self {
            shear_mm: 5.0,
            spin_deg: 5.0,
        }
    }
}

/// Material point and tangent direction marking where contact was first made.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub point: Vector3<f64>,
    pub x_axis: Vector3<f64>,
}

/// Ground-truth contact reading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    /// Sensor pose in the feature frame.
    pub sensor_in_feature: Pose,
    pub depth: f64,
    /// Angle between the sensor axis and the inward surface normal (rad).
    pub normal_angle: f64,
}

fn tangent_part(v: &Vector3<f64>, n: &Vector3<f64>) -> Vector3<f64> {
    v - n * v.dot(n)
}

fn rotate_about(v: &Vector3<f64>, axis: &Vector3<f64>, angle: f64) -> Vector3<f64> {
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * axis.dot(v) * (1.0 - c)
}

/// Tracks the contact anchor on one surface so that shear and spin accumulate
/// between calls.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ContactTracker {
    pub anchor: Option<Anchor>,
    pub slip: SlipLimits,
}

impl ContactTracker {
    pub fn anchored(anchor: Anchor) -> Self {
        Self {
            anchor: Some(anchor),
            slip: SlipLimits::default(),
        }
    }

    /// Contact pose of a sensor at `sensor_pose` (world frame) against `surface`.
    ///
    /// The first call anchors at the current contact point with the sensor's
    /// projected `x` axis, so it reads zero shear and spin.
    pub fn contact_pose(&mut self, surface: &SurfaceModel, sensor_pose: &Pose) -> Result<Contact, SimError> {
        let sensor = surface.pose.inverse() * *sensor_pose;
        let centre = *sensor.translation();
        let proj = surface.project(&centre)?;
        let depth = TIP_RADIUS - proj.signed_distance;
        if !(0.0..=MAX_DEPTH).contains(&depth) {
            return Err(SimError::NoContact(format!("depth {depth:.3} mm outside [0, {MAX_DEPTH}]")));
        }
        let inward = -proj.normal;
        let sensor_axes = sensor.rotation();
        let normal_angle = sensor_axes.column(2).dot(&inward).clamp(-1.0, 1.0).acos();
        if normal_angle > MAX_TILT_DEG.to_radians() {
            return Err(SimError::NoContact(format!(
                "tilt {:.1} deg beyond {MAX_TILT_DEG}",
                normal_angle.to_degrees()
            )));
        }

        let sensor_x: Vector3<f64> = sensor_axes.column(0).into();
        let mut anchor = match self.anchor {
            Some(a) => a,
            None => Anchor {
                point: proj.point,
                x_axis: sensor_x,
            },
        };

        let mut shear = tangent_part(&(proj.point - anchor.point), &proj.normal);
        let limit = self.slip.shear_mm;
        if shear.norm() > limit {
            let dragged = proj.point - shear * (limit / shear.norm());
            anchor.point = surface.project(&dragged)?.point;
            shear = tangent_part(&(proj.point - anchor.point), &proj.normal);
        }

        let mut x_axis = tangent_part(&anchor.x_axis, &proj.normal);
        if x_axis.norm() < 1e-9 {
            x_axis = tangent_part(&sensor_x, &proj.normal);
        }
        x_axis.normalize_mut();
        let sensor_x_t = tangent_part(&sensor_x, &proj.normal);
        if sensor_x_t.norm() > 1e-9 {
            let spin = x_axis.cross(&sensor_x_t).dot(&inward).atan2(x_axis.dot(&sensor_x_t));
            let max_spin = self.slip.spin_deg.to_radians();
            if spin.abs() > max_spin {
                x_axis = rotate_about(&x_axis, &inward, spin - max_spin.copysign(spin)).normalize();
            }
        }
        anchor.x_axis = x_axis;
        self.anchor = Some(anchor);

        let y_axis = inward.cross(&x_axis);
        let feature_axes = Matrix3::from_columns(&[x_axis, y_axis, inward]);
        let offset = shear + inward * depth;
        let sensor_in_feature = Pose::from_parts(feature_axes.transpose() * sensor_axes, feature_axes.transpose() * offset);
        Ok(Contact {
            sensor_in_feature,
            depth,
            normal_angle,
        })
    }
}

/// Contact pose with a fresh anchor: zero shear and spin by construction.
pub fn contact_pose(surface: &SurfaceModel, sensor_pose: &Pose) -> Result<Contact, SimError> {
    ContactTracker::default().contact_pose(surface, sensor_pose)
}

/// World pose of a sensor touching `surface` at the body-frame point under `tip_point`
/// with the given depth, its axis along the inward normal and its `x` axis as close
/// to `x_hint` as the tangent plane allows.
pub fn sensor_pose_at(
    surface: &SurfaceModel,
    tip_point: &Vector3<f64>,
    depth: f64,
    x_hint: &Vector3<f64>,
) -> Result<Pose, SimError> {
    let proj = surface.project(tip_point)?;
    let inward = -proj.normal;
    let mut x = tangent_part(x_hint, &proj.normal);
    if x.norm() < 1e-9 {
        return Err(SimError::InvalidScenario("x hint parallel to the surface normal".into()));
    }
    x.normalize_mut();
    let rot = Matrix3::from_columns(&[x, inward.cross(&x), inward]);
    let centre = proj.point + proj.normal * (TIP_RADIUS - depth);
    Ok(surface.pose * Pose::from_parts(rot, centre))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::{euler_to_pose, pose_to_euler};

    fn flat() -> SurfaceModel {
        SurfaceModel::new(SurfaceKind::Flat, Pose::identity()).unwrap()
    }

    #[test]
    fn normal_contact_reads_depth_only() {
        let s = flat();
        let sensor = sensor_pose_at(&s, &Vector3::new(4.0, -2.0, 0.0), 3.0, &Vector3::x()).unwrap();
        let c = contact_pose(&s, &sensor).unwrap();
        let e = pose_to_euler(&c.sensor_in_feature).unwrap();
        for (got, want) in e.iter().zip([0.0, 0.0, 3.0, 0.0, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn tilt_about_feature_x() {
        let s = flat();
        let base = sensor_pose_at(&s, &Vector3::zeros(), 3.0, &Vector3::x()).unwrap();
        let tilted = base * euler_to_pose(&[0.0, 0.0, 0.0, 10f64.to_radians(), 0.0, 0.0]);
        let c = contact_pose(&s, &tilted).unwrap();
        let e = pose_to_euler(&c.sensor_in_feature).unwrap();
        assert!((e[3] - 10f64.to_radians()).abs() < 1e-12);
        assert!((e[2] - 3.0).abs() < 1e-12);
        assert!((c.normal_angle - 10f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn out_of_envelope_is_no_contact() {
        let s = flat();
        let far = sensor_pose_at(&s, &Vector3::zeros(), -1.0, &Vector3::x()).unwrap();
        assert!(matches!(contact_pose(&s, &far), Err(SimError::NoContact(_))));
        let deep = sensor_pose_at(&s, &Vector3::zeros(), 10.5, &Vector3::x()).unwrap();
        assert!(matches!(contact_pose(&s, &deep), Err(SimError::NoContact(_))));
    }

    #[test]
    fn shear_accumulates_then_slips() {
        let s = flat();
        let start = sensor_pose_at(&s, &Vector3::zeros(), 3.0, &Vector3::x()).unwrap();
        let mut tracker = ContactTracker::default();
        tracker.contact_pose(&s, &start).unwrap();
        let moved = Pose::from_translation(Vector3::new(0.0, 3.0, 0.0)) * start;
        let c = tracker.contact_pose(&s, &moved).unwrap();
        assert!((c.sensor_in_feature.translation().y.abs() - 3.0).abs() < 1e-12);
        let far = Pose::from_translation(Vector3::new(0.0, 30.0, 0.0)) * start;
        let c = tracker.contact_pose(&s, &far).unwrap();
        assert!((c.sensor_in_feature.translation().xy().norm() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn curved_surfaces_project_radially() {
        let dome = SurfaceModel::new(SurfaceKind::hemisphere(), Pose::identity()).unwrap();
        let p = dome.project(&Vector3::new(0.0, 0.0, 10.0)).unwrap();
        assert!((p.signed_distance - 10.0).abs() < 1e-12);
        let q = dome.project(&Vector3::new(70.0, 0.0, -60.0)).unwrap();
        assert!((q.normal - Vector3::x()).norm() < 1e-12);
        assert!(dome.project(&Vector3::new(0.0, 0.0, -200.0)).is_err());
        let ramp = SurfaceModel::new(SurfaceKind::ramp(), Pose::identity()).unwrap();
        let r = ramp.project(&Vector3::new(7.0, 0.0, 5.0)).unwrap();
        assert!((r.point - Vector3::new(7.0, 0.0, 0.0)).norm() < 1e-12);
        let edge = (35f64).to_radians();
        assert!(ramp.project(&Vector3::new(0.0, 300.0 * edge.sin(), 300.0 * edge.cos() - 300.0)).is_err());
    }
}
