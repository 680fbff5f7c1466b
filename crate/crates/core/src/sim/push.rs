//! Planar pushing: the differential bearing model and the rigid object the
//! scenarios push around.

use nalgebra::{Matrix3, Vector2, Vector3};

use super::SimError;
use crate::liegroup::Pose;

pub const DEFAULT_SLIP_FACTOR: f64 = 0.7;
/// Distance (mm) from the contact point to the centre of friction.
pub const DEFAULT_FRICTION_RADIUS: f64 = 40.0;
/// Largest per-step displacement (mm) the differential model accepts.
pub const MAX_PUSH_STEP: f64 = 5.0;
/// Tip indentation (mm) at which the object starts to slide.
pub const DEFAULT_PUSH_DEPTH: f64 = 3.0;

/// Target seen from the contact frame of a pushed object.
///
/// `y`, `z` are target coordinates in a frame that follows the contact point but
/// keeps the starting orientation; `phi` is how far the contact frame has turned
/// since then.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushedObject {
    pub y: f64,
    pub z: f64,
    pub phi: f64,
    pub alpha: f64,
    pub r0: f64,
}

impl PushedObject {
    pub fn new(y: f64, z: f64, alpha: f64, r0: f64) -> Result<Self, SimError> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(r0 > 0.0) {
            return Err(SimError::InvalidScenario(format!("need 0 < alpha <= 1 and r0 > 0, got {alpha}, {r0}")));
        }
        Ok(Self { y, z, phi: 0.0, alpha, r0 })
    }

    /// Target bearing relative to the current contact normal.
    pub fn bearing(&self) -> f64 {
        self.y.atan2(self.z) - self.phi
    }

    pub fn range(&self) -> f64 {
        self.y.hypot(self.z)
    }

    /// Target coordinates in the current (turned) contact frame.
    pub fn target_in_contact(&self) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        (self.y * c - self.z * s, self.y * s + self.z * c)
    }
}

/// Advances the object by one small push.
///
/// `delta` is the change `(dy, dz)` of the target coordinates, expressed in the
/// current contact frame; it is the negative of the pusher's displacement. The
/// contact frame turns by `(alpha / r0) dy`.
pub fn push_object_step(obj: &PushedObject, delta: (f64, f64)) -> Result<PushedObject, SimError> {
    let (dy, dz) = delta;
    if dy.abs() > MAX_PUSH_STEP || dz.abs() > MAX_PUSH_STEP || !dy.is_finite() || !dz.is_finite() {
        return Err(SimError::StepTooLarge { dy, dz });
    }
    let (s, c) = obj.phi.sin_cos();
    Ok(PushedObject {
        y: obj.y + dy * c + dz * s,
        z: obj.z - dy * s + dz * c,
        phi: obj.phi + obj.alpha / obj.r0 * dy,
        ..*obj
    })
}

/// Partial derivatives of the target bearing and the radius at which steering reverses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BearingSensitivity {
    pub d_y: f64,
    pub d_z: f64,
    pub d_phi: f64,
    pub sign_flip_radius: f64,
}

pub fn bearing_sensitivity(obj: &PushedObject) -> Result<BearingSensitivity, SimError> {
    let (y, z) = obj.target_in_contact();
    let r2 = y * y + z * z;
    if r2 == 0.0 {
        return Err(SimError::SingularTarget);
    }
    Ok(BearingSensitivity {
        d_y: z / r2,
        d_z: -y / r2,
        d_phi: -1.0,
        sign_flip_radius: obj.r0 / obj.alpha,
    })
}

/// Pushable object shape parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectPreset {
    pub name: String,
    pub alpha: f64,
    pub r0: f64,
    /// Distance (mm) between the pushed face and the opposite face.
    pub thickness: f64,
    /// Tall objects topple without a stabilising second arm.
    pub tall: bool,
}

pub const OBJECT_PRESETS: [&str; 6] = ["square", "circle", "hexagon", "tall_square", "tall_circle", "tall_hexagon"];

pub fn object_preset(name: &str) -> Result<ObjectPreset, SimError> {
    let (base, tall) = match name.strip_prefix("tall_") {
        Some(b) => (b, true),
        None => (name, false),
    };
    let (alpha, r0, thickness) = match base {
        "square" => (DEFAULT_SLIP_FACTOR, DEFAULT_FRICTION_RADIUS, 80.0),
        "circle" => (0.5, 37.5, 75.0),
        "hexagon" => (0.6, 35.0, 70.0),
        _ => return Err(SimError::InvalidScenario(format!("unknown object `{name}`"))),
    };
    Ok(ObjectPreset {
        name: name.to_string(),
        alpha,
        r0,
        thickness,
        tall,
    })
}

/// Vertical-walled object sliding on the work plane. Plane vectors are world
/// `(y, z)`; world `x` is up.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarObject {
    /// Material point on the pushed face.
    pub face_origin: Vector2<f64>,
    /// Direction of the push normal, measured from world `+z` toward `+y`.
    pub heading: f64,
    pub preset: ObjectPreset,
    pub push_depth: f64,
    /// Height (mm) of the contact line above the work plane.
    pub height: f64,
}

/// Outcome of one pusher move.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushMotion {
    pub pushing: bool,
    pub advance: f64,
    pub turn: f64,
}

impl PlanarObject {
    /// Push normal (into the object).
    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(self.heading.sin(), self.heading.cos())
    }

    /// Tangent matching the pusher sensor's `y` axis when the sensor's `x` is up.
    pub fn tangent(&self) -> Vector2<f64> {
        Vector2::new(self.heading.cos(), -self.heading.sin())
    }

    /// Distance from a tip centre to the pushed face, positive outside the object.
    pub fn gap(&self, tip: &Vector2<f64>) -> f64 {
        (self.face_origin - tip).dot(&self.normal())
    }

    /// Foot of the perpendicular from `tip` onto the pushed face.
    pub fn contact_point(&self, tip: &Vector2<f64>) -> Vector2<f64> {
        tip + self.normal() * self.gap(tip)
    }

    /// Moves the object in response to the tip moving from `before` to `after`.
    ///
    /// The object slides only while the tip indents past `push_depth`, and then
    /// settles at exactly that indentation. The contact sticks tangentially and the
    /// object turns about the contact point by `-(alpha / r0)` times the tangential
    /// pusher motion.
    pub fn respond(&mut self, before: &Vector2<f64>, after: &Vector2<f64>, tip_radius: f64) -> PushMotion {
        let depth = tip_radius - self.gap(after);
        if depth <= self.push_depth {
            return PushMotion {
                pushing: false,
                advance: 0.0,
                turn: 0.0,
            };
        }
        let tangent = self.tangent();
        let normal = self.normal();
        let sideways = (after - before).dot(&tangent);
        let turn = -self.preset.alpha / self.preset.r0 * sideways;
        let advance = (tip_radius - self.push_depth) / turn.cos() - self.gap(after);
        let shift = tangent * sideways + normal * advance;
        let pivot = self.contact_point(before) + shift;
        // A positive turn swings the normal toward the tangent, which is a clockwise
        // rotation in (y, z) coordinates.
        let (s, c) = turn.sin_cos();
        let rel = self.face_origin + shift - pivot;
        self.face_origin = pivot + Vector2::new(c * rel.x + s * rel.y, -s * rel.x + c * rel.y);
        self.heading += turn;
        PushMotion {
            pushing: true,
            advance,
            turn,
        }
    }

    /// World pose of a surface body frame on the pushed face (`back = false`) or the
    /// opposite face, with body `x` up and body `z` the outward normal.
    pub fn face_pose(&self, back: bool) -> Pose {
        let n = self.normal();
        let (origin, outward) = if back {
            (self.face_origin + n * self.preset.thickness, n)
        } else {
            (self.face_origin, -n)
        };
        let x = Vector3::x();
        let z = Vector3::new(0.0, outward.x, outward.y);
        let rot = Matrix3::from_columns(&[x, z.cross(&x), z]);
        Pose::from_parts(rot, Vector3::new(self.height, origin.x, origin.y))
    }

    /// Perpendicular distance from `target` to the contact normal through `tip`'s contact point.
    pub fn normal_line_offset(&self, tip: &Vector2<f64>, target: &Vector2<f64>) -> f64 {
        (target - self.contact_point(tip)).dot(&self.tangent()).abs()
    }
}
