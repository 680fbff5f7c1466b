//! Tangent-space pose errors, feedforward-feedback PID, and the tactile servoing
//! and pushing controllers built on them.

use nalgebra::Vector3;
use thiserror::Error;

use crate::liegroup::{euler_to_pose, log, LieError, Pose, Twist};

/// Control period used when a scenario does not set one (camera rate).
pub const DEFAULT_DT: f64 = 1.0 / 30.0;
pub const DEFAULT_EWMA_DECAY: f64 = 0.5;
/// Radius (mm) inside which target alignment is switched off.
pub const DEFAULT_SWITCH_OFF_RADIUS: f64 = 120.0;
/// Tip-centre to target distance (mm) that ends a push.
pub const DEFAULT_TERMINATION_RADIUS: f64 = 20.0;

/// Names accepted by [`servo_preset`] and [`push_preset`].
pub const SERVO_PRESETS: [&str; 4] = ["tracking", "surface_follow", "stabiliser", "stabiliser_tall"];
pub const PUSH_PRESETS: [&str; 4] = ["push_pid1", "push_pid2_single", "push_pid2_dual", "push_tall"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("gain {name}[{index}] = {value} must be finite and non-negative")]
    InvalidGain {
        name: &'static str,
        index: usize,
        value: f64,
    },
    #[error("{name} interval [{lo}, {hi}] must contain 0")]
    InvalidClip { name: &'static str, lo: f64, hi: f64 },
    #[error("EWMA decay {0} must lie in [0, 1)")]
    InvalidDecay(f64),
    #[error("switch-off radius {switch_off} must exceed termination radius {termination} > 0")]
    InvalidRadii { switch_off: f64, termination: f64 },
    #[error("unknown controller preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Lie(#[from] LieError),
}

/// Closed interval used for componentwise saturation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub const fn symmetric(bound: f64) -> Self {
        Self { lo: -bound, hi: bound }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }
}

/// Diagonal PID gains and saturation limits for an `N`-channel controller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidConfig<const N: usize> {
    pub kp: [f64; N],
    pub ki: [f64; N],
    pub kd: [f64; N],
    pub integral_clip: [Interval; N],
    pub output_clip: [Interval; N],
    pub ewma_decay: f64,
}

impl<const N: usize> PidConfig<N> {
    /// Gains with no clipping and the default EWMA decay.
    pub fn new(kp: [f64; N], ki: [f64; N], kd: [f64; N]) -> Self {
        Self {
            kp,
            ki,
            kd,
            integral_clip: [Interval::UNBOUNDED; N],
            output_clip: [Interval::UNBOUNDED; N],
            ewma_decay: DEFAULT_EWMA_DECAY,
        }
    }

    pub fn with_integral_clip(mut self, bound: f64) -> Self {
        self.integral_clip = [Interval::symmetric(bound); N];
        self
    }

    pub fn with_output_clip(mut self, bound: f64) -> Self {
        self.output_clip = [Interval::symmetric(bound); N];
        self
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        for (name, gains) in [("kp", &self.kp), ("ki", &self.ki), ("kd", &self.kd)] {
            for (index, &value) in gains.iter().enumerate() {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(ControlError::InvalidGain { name, index, value });
                }
            }
        }
        for (name, clips) in [("integral_clip", &self.integral_clip), ("output_clip", &self.output_clip)] {
            for c in clips {
                if !c.contains(0.0) {
                    return Err(ControlError::InvalidClip {
                        name,
                        lo: c.lo,
                        hi: c.hi,
                    });
                }
            }
        }
        if !(0.0..1.0).contains(&self.ewma_decay) {
            return Err(ControlError::InvalidDecay(self.ewma_decay));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidState<const N: usize> {
    pub integral: [f64; N],
    pub smoothed_error: [f64; N],
    pub prev_smoothed_error: [f64; N],
    pub initialized: bool,
}

impl<const N: usize> Default for PidState<N> {
    fn default() -> Self {
        Self {
            integral: [0.0; N],
            smoothed_error: [0.0; N],
            prev_smoothed_error: [0.0; N],
            initialized: false,
        }
    }
}

/// One backward-Euler PID update on raw arrays.
///
/// The proportional and integral paths use the raw error; only the derivative
/// sees the EWMA-smoothed error, and it is zero on the first call.
///
/// # Panics
/// If `dt` is not positive.
pub fn pid_update<const N: usize>(
    cfg: &PidConfig<N>,
    state: &PidState<N>,
    feedforward: &[f64; N],
    error: &[f64; N],
    dt: f64,
) -> ([f64; N], PidState<N>) {
    assert!(dt > 0.0, "PID step needs dt > 0, got {dt}");
    let mut next = *state;
    let mut out = [0.0; N];
    for j in 0..N {
        next.integral[j] = cfg.integral_clip[j].clamp(state.integral[j] + error[j] * dt);
        let derivative = if state.initialized {
            next.prev_smoothed_error[j] = state.smoothed_error[j];
            next.smoothed_error[j] =
                cfg.ewma_decay * state.smoothed_error[j] + (1.0 - cfg.ewma_decay) * error[j];
            (next.smoothed_error[j] - next.prev_smoothed_error[j]) / dt
        } else {
            next.smoothed_error[j] = error[j];
            next.prev_smoothed_error[j] = error[j];
            0.0
        };
        let u = feedforward[j] + cfg.kp[j] * error[j] + cfg.ki[j] * next.integral[j] + cfg.kd[j] * derivative;
        out[j] = cfg.output_clip[j].clamp(u);
    }
    next.initialized = true;
    (out, next)
}

/// Six-channel PID step on twists.
pub fn pid_step(
    cfg: &PidConfig<6>,
    state: &PidState<6>,
    feedforward: &Twist,
    error: &Twist,
    dt: f64,
) -> (Twist, PidState<6>) {
    let (u, next) = pid_update(cfg, state, &feedforward.to_array(), &error.to_array(), dt);
    (Twist::from_array(u), next)
}

/// `x^-1 x_ref`: the reference expressed in the frame of `x`.
pub fn pose_error_local(x: &Pose, x_ref: &Pose) -> Pose {
    x.inverse() * *x_ref
}

/// `x_ref x^-1`: the left correction taking `x` to `x_ref`.
pub fn pose_error_global(x: &Pose, x_ref: &Pose) -> Pose {
    x_ref * &x.inverse()
}

pub fn tangent_error_local(x: &Pose, x_ref: &Pose) -> Result<Twist, LieError> {
    log(&pose_error_local(x, x_ref))
}

pub fn tangent_error_global(x: &Pose, x_ref: &Pose) -> Result<Twist, LieError> {
    log(&pose_error_global(x, x_ref))
}

/// Tactile servoing setup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServoConfig {
    /// Target surface pose in the reference sensor frame.
    pub reference_contact_pose: Pose,
    /// Reference velocity, expressed in the reference sensor frame.
    pub feedforward_twist: Twist,
    pub pid: PidConfig<6>,
}

impl ServoConfig {
    /// Builds the config from a reference sensor-in-surface pose given as Euler
    /// `(x, y, z, alpha, beta, gamma)` in mm and rad.
    pub fn from_euler_reference(reference: &[f64; 6], feedforward: Twist, pid: PidConfig<6>) -> Self {
        Self {
            reference_contact_pose: euler_to_pose(reference).inverse(),
            feedforward_twist: feedforward,
            pid,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServoOutput {
    /// End-effector twist command in the current sensor frame.
    pub command: Twist,
    pub pid: PidState<6>,
    /// Reference sensor pose in the current sensor frame.
    pub error_pose: Pose,
    pub error: Twist,
}

pub fn servo_step(
    cfg: &ServoConfig,
    pid: &PidState<6>,
    observed_contact: &Pose,
    dt: f64,
) -> Result<ServoOutput, ControlError> {
    let error_pose = observed_contact * &cfg.reference_contact_pose.inverse();
    let error = log(&error_pose)?;
    let (feedback, pid) = pid_step(&cfg.pid, pid, &Twist::zero(), &error, dt);
    let command = feedback + error_pose.adjoint() * cfg.feedforward_twist;
    Ok(ServoOutput {
        command,
        pid,
        error_pose,
        error,
    })
}

/// Pushing controller: tactile servoing plus a bearing loop that steers the object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushConfig {
    pub servo: ServoConfig,
    pub bearing_pid: PidConfig<1>,
    pub switch_off_radius: f64,
    pub termination_radius: f64,
    pub target_pose_in_work: Pose,
}

impl PushConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        self.servo.pid.validate()?;
        self.bearing_pid.validate()?;
        if !(self.termination_radius > 0.0 && self.switch_off_radius > self.termination_radius) {
            return Err(ControlError::InvalidRadii {
                switch_off: self.switch_off_radius,
                termination: self.termination_radius,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PushStatus {
    Running,
    Terminated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushOutput {
    pub command: Twist,
    pub pid: PidState<6>,
    pub bearing_pid: PidState<1>,
    pub status: PushStatus,
    /// Target bearing in the reference sensor frame (rad).
    pub bearing: f64,
    /// Target distance in the reference sensor's y-z plane (mm).
    pub target_range: f64,
    /// Distance from the sensor tip centre to the target (mm).
    pub tip_distance: f64,
    /// Tangential steering command before mapping to the current frame.
    pub alignment: f64,
}

/// Bearing and in-plane range of a point in the reference sensor frame.
pub fn target_bearing(target: &Vector3<f64>) -> (f64, f64) {
    (target.y.atan2(target.z), target.y.hypot(target.z))
}

/// One pushing control cycle. The bearing loop works in degrees.
///
/// Once the tip is within the termination radius the command is zero and the
/// status is [`PushStatus::Terminated`].
pub fn push_step(
    cfg: &PushConfig,
    pid: &PidState<6>,
    bearing_pid: &PidState<1>,
    observed_contact: &Pose,
    sensor_pose_in_work: &Pose,
    dt: f64,
) -> Result<PushOutput, ControlError> {
    let servo = servo_step(&cfg.servo, pid, observed_contact, dt)?;
    let target_in_sensor = sensor_pose_in_work.inverse() * cfg.target_pose_in_work;
    let tip_distance = target_in_sensor.translation().norm();
    let target_in_reference = servo.error_pose.inverse() * target_in_sensor;
    let (bearing, target_range) = target_bearing(target_in_reference.translation());

    if tip_distance < cfg.termination_radius {
        return Ok(PushOutput {
            command: Twist::zero(),
            pid: servo.pid,
            bearing_pid: *bearing_pid,
            status: PushStatus::Terminated,
            bearing,
            target_range,
            tip_distance,
            alignment: 0.0,
        });
    }

    let (alignment, next_bearing_pid) = if target_range < cfg.switch_off_radius {
        (0.0, *bearing_pid)
    } else {
        let error = [-bearing.to_degrees()];
        let (u, s) = pid_update(&cfg.bearing_pid, bearing_pid, &[0.0], &error, dt);
        (u[0], s)
    };
    let steer = Twist::from_array([0.0, alignment, 0.0, 0.0, 0.0, 0.0]);
    Ok(PushOutput {
        command: servo.command + servo.error_pose.adjoint() * steer,
        pid: servo.pid,
        bearing_pid: next_bearing_pid,
        status: PushStatus::Running,
        bearing,
        target_range,
        tip_distance,
        alignment,
    })
}

fn servo_from_table(kp: [f64; 6], ki: [f64; 6], kd: [f64; 6], clip: Option<f64>, reference: [f64; 6], ff: [f64; 6]) -> ServoConfig {
    let mut pid = PidConfig::new(kp, ki, kd);
    if let Some(c) = clip {
        pid = pid.with_integral_clip(c);
    }
    ServoConfig::from_euler_reference(&reference, Twist::from_array(ff), pid)
}

/// Named tactile servoing configurations. The surface-following preset has zero
/// feedforward; callers set the task's tangential velocity.
pub fn servo_preset(name: &str) -> Result<ServoConfig, ControlError> {
    let zero = [0.0; 6];
    Ok(match name {
        "tracking" => servo_from_table(
            [5.0, 5.0, 5.0, 2.0, 2.0, 0.0],
            [0.5, 0.5, 0.5, 0.2, 0.2, 0.2],
            [0.5, 0.5, 0.5, 0.2, 0.2, 0.2],
            None,
            [0.0, 0.0, 6.0, 0.0, 0.0, 0.0],
            zero,
        ),
        "surface_follow" => servo_from_table(
            [0.0, 0.0, 2.0, 2.0, 2.0, 0.0],
            [0.0, 0.0, 0.1, 0.1, 0.1, 0.0],
            [0.0, 0.0, 0.05, 0.05, 0.05, 0.0],
            Some(25.0),
            [0.0, 0.0, 3.0, 0.0, 0.0, 0.0],
            zero,
        ),
        "stabiliser" | "stabiliser_tall" => {
            let x = if name == "stabiliser" { 0.0 } else { -0.5 };
            servo_from_table(
                [5.0, 0.0, 5.0, 1.0, 0.0, 0.0],
                [0.5, 0.0, 0.5, 0.1, 0.0, 0.0],
                [0.5, 0.0, 0.5, 0.1, 0.0, 0.0],
                Some(200.0),
                [x, 0.0, 3.0, 0.0, 0.0, 0.0],
                zero,
            )
        }
        "push_pid1" => push_servo(0.0),
        other => return Err(ControlError::UnknownPreset(other.to_string())),
    })
}

fn push_servo(reference_x: f64) -> ServoConfig {
    servo_from_table(
        [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [0.1, 0.0, 0.0, 0.1, 0.0, 0.0],
        [0.1, 0.0, 0.0, 0.1, 0.0, 0.0],
        Some(25.0),
        [reference_x, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 10.0, 0.0, 0.0, 0.0],
    )
}

/// Bearing-loop gains for single-arm (`dual = false`) or dual-arm pushing.
pub fn bearing_pid_preset(dual: bool) -> PidConfig<1> {
    let ki = if dual { 0.5 } else { 0.3 };
    PidConfig::new([0.9], [ki], [0.9])
        .with_integral_clip(10.0)
        .with_output_clip(15.0)
}

/// Named pushing configurations aimed at `target_pose_in_work`. `push_pid1`
/// uses the single-arm bearing gains.
pub fn push_preset(name: &str, target_pose_in_work: Pose) -> Result<PushConfig, ControlError> {
    let (servo, dual) = match name {
        "push_pid1" | "push_pid2_single" => (push_servo(0.0), false),
        "push_pid2_dual" => (push_servo(0.0), true),
        "push_tall" => (push_servo(0.5), true),
        other => return Err(ControlError::UnknownPreset(other.to_string())),
    };
    Ok(PushConfig {
        servo,
        bearing_pid: bearing_pid_preset(dual),
        switch_off_radius: DEFAULT_SWITCH_OFF_RADIUS,
        termination_radius: DEFAULT_TERMINATION_RADIUS,
        target_pose_in_work,
    })
}
