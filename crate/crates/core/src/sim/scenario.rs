//! Closed-loop task runners.
//!
//! Every control cycle reads the true contact, passes it through the observation
//! model and the filter, runs the controller, and integrates the commanded
//! end-effector twist over one period.

use nalgebra::{Vector2, Vector3};
use rand::Rng;

use super::leader::LeaderMotion;
use super::log::{Metrics, TrajectoryLog, TrajectoryRecord};
use super::observation::ObservationModel;
use super::push::{object_preset, ObjectPreset, PlanarObject, DEFAULT_PUSH_DEPTH};
use super::surface::{sensor_pose_at, Contact, ContactTracker, SurfaceKind, SurfaceModel, TIP_RADIUS};
use super::SimError;
use crate::control::{
    push_preset, push_step, servo_preset, servo_step, PidState, PushConfig, PushStatus, ServoConfig, DEFAULT_DT,
};
use crate::filter::{default_dynamics_noise, DynamicsNoise, FilterState, DEPLOYMENT_SIGMA};
use crate::liegroup::{exp, log, Pose, Twist};

/// Positions beyond this many mm from the world origin count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e4;
/// Shortfall (mm) below the reference depth at which a stabilising arm stops supporting a tall object.
pub const SUPPORT_TOLERANCE: f64 = 1.5;
/// Seconds of lost support after which a tall object topples.
pub const TOPPLE_TIME: f64 = 1.0;
pub const FOLLOW_SPEED: f64 = 10.0;

/// How the controller sees the contact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Perception {
    /// Noisy observations filtered with dynamics noise scale `sigma`.
    Filtered { sigma: f64 },
    /// The controller reads the true contact pose.
    Ideal,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    /// A follower arm holds contact with a plate moved by the leader.
    Track { motion: LeaderMotion },
    /// Slide along a static surface, once per direction (degrees in the reference
    /// sensor's tangent plane), each path starting from the same point.
    Follow {
        surface: SurfaceKind,
        speed: f64,
        directions_deg: Vec<f64>,
        /// Where the paths start, as an angle (deg) along curved surfaces.
        start_deg: f64,
    },
    PushSingle,
    PushDual,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Track { .. } => "track",
            Task::Follow { .. } => "follow",
            Task::PushSingle => "push_single",
            Task::PushDual => "push_dual",
        }
    }
}

/// Layout of a pushing run, in world `(y, z)` plane coordinates with `x` up.
#[derive(Clone, Debug, PartialEq)]
pub struct PushSetup {
    pub object: ObjectPreset,
    pub start: [f64; 2],
    pub target: [f64; 2],
    /// Height (mm) of the sensor above the work plane.
    pub height: f64,
    pub push_depth: f64,
    pub leader: PushConfig,
}

impl PushSetup {
    pub fn new(object: &str, dual: bool) -> Result<Self, SimError> {
        let object = object_preset(object)?;
        let height = 45.0;
        let target = [0.0, 375.0];
        let name = match (dual, object.tall) {
            (true, true) => "push_tall",
            (true, false) => "push_pid2_dual",
            (false, _) => "push_pid2_single",
        };
        let leader = push_preset(name, Pose::from_translation(Vector3::new(height, target[0], target[1])))?;
        Ok(Self {
            object,
            start: [-250.0, 100.0],
            target,
            height,
            push_depth: DEFAULT_PUSH_DEPTH,
            leader,
        })
    }

    pub fn target_pose(&self) -> Pose {
        Pose::from_translation(Vector3::new(self.height, self.target[0], self.target[1]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub task: Task,
    /// Run length (s); per path for following, an upper limit for pushing.
    pub duration: f64,
    pub dt: f64,
    /// Start-up period (s) excluded from the averaged metrics.
    pub transient: f64,
    pub observation: ObservationModel,
    pub perception: Perception,
    /// Controller of the servoing arm (follower, surface follower, or stabiliser).
    pub servo: ServoConfig,
    pub push: Option<PushSetup>,
}

impl Scenario {
    pub fn track() -> Self {
        Self {
            task: Task::Track {
                motion: LeaderMotion::periodic(),
            },
            duration: 60.0,
            dt: DEFAULT_DT,
            transient: 2.0,
            observation: ObservationModel::default(),
            perception: Perception::Filtered {
                sigma: DEPLOYMENT_SIGMA,
            },
            servo: servo_preset("tracking").expect("built-in preset"),
            push: None,
        }
    }

    pub fn follow(surface: SurfaceKind) -> Self {
        let (directions_deg, start_deg, duration) = match surface {
            SurfaceKind::Flat => (vec![90.0], 0.0, 10.0),
            SurfaceKind::Ramp { .. } => (vec![90.0], 25.0, 15.0),
            SurfaceKind::Hemisphere { .. } => ((0..8).map(|i| 45.0 * i as f64).collect(), 0.0, 5.0),
        };
        Self {
            task: Task::Follow {
                surface,
                speed: FOLLOW_SPEED,
                directions_deg,
                start_deg,
            },
            duration,
            servo: servo_preset("surface_follow").expect("built-in preset"),
            ..Self::track()
        }
    }

    pub fn push_single(object: &str) -> Result<Self, SimError> {
        Ok(Self {
            task: Task::PushSingle,
            duration: 120.0,
            servo: servo_preset("stabiliser").expect("built-in preset"),
            push: Some(PushSetup::new(object, false)?),
            ..Self::track()
        })
    }

    pub fn push_dual(object: &str) -> Result<Self, SimError> {
        let setup = PushSetup::new(object, true)?;
        let stabiliser = if setup.object.tall { "stabiliser_tall" } else { "stabiliser" };
        let servo = servo_preset(stabiliser).expect("built-in preset");
        Ok(Self {
            task: Task::PushDual,
            duration: 120.0,
            transient: slow_time_constant(&servo, 2).expect("stabiliser depth loop has integral action"),
            servo,
            push: Some(setup),
            ..Self::track()
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.transient >= 0.0 && self.transient < self.duration) {
            return bad(format!("transient {} must lie in [0, duration)", self.transient));
        }
        if let Perception::Filtered { sigma } = self.perception {
            default_dynamics_noise(sigma)?;
        }
        self.observation.validate()?;
        self.servo.pid.validate()?;
        match &self.task {
            Task::PushSingle | Task::PushDual => match &self.push {
                Some(p) => p.leader.validate()?,
                None => return bad("pushing task without a push setup".into()),
            },
            Task::Follow {
                speed, directions_deg, ..
            } => {
                if directions_deg.is_empty() || !speed.is_finite() {
                    return bad("follow needs at least one direction and a finite speed".into());
                }
            }
            Task::Track { .. } => {}
        }
        Ok(())
    }
}

/// Log and summary of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub metrics: Metrics,
}

#[derive(Default)]
struct Stat {
    sum: f64,
    max: f64,
    n: usize,
}

impl Stat {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.max = self.max.max(v);
        self.n += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }

    fn max(&self) -> Option<f64> {
        (self.n > 0).then_some(self.max)
    }
}

/// One arm: its pose, contact anchor, filter and controller memory.
struct Arm {
    name: String,
    pose: Pose,
    tracker: ContactTracker,
    filter: Option<FilterState>,
    pid: PidState<6>,
}

struct Perceived {
    contact: Contact,
    truth: Twist,
    observation: Twist,
    estimate: Pose,
    cov_trace: f64,
}

impl Arm {
    fn new(name: &str, pose: Pose) -> Self {
        Self {
            name: name.to_string(),
            pose,
            tracker: ContactTracker::default(),
            filter: None,
            pid: PidState::default(),
        }
    }

    fn perceive<R: Rng + ?Sized>(
        &mut self,
        surface: &SurfaceModel,
        sc: &Scenario,
        noise: &DynamicsNoise,
        rng: &mut R,
    ) -> Result<Perceived, SimError> {
        let contact = self.tracker.contact_pose(surface, &self.pose)?;
        let truth_pose = contact.sensor_in_feature.inverse();
        let truth = log(&truth_pose)?;
        if let Perception::Ideal = sc.perception {
            return Ok(Perceived {
                contact,
                truth,
                observation: truth,
                estimate: truth_pose,
                cov_trace: 0.0,
            });
        }
        let obs = sc.observation.observe(&contact.sensor_in_feature, rng)?;
        let state = match &self.filter {
            None => FilterState::init(obs, self.pose),
            Some(f) => f.step(&obs, &self.pose, noise)?,
        };
        self.filter = Some(state);
        Ok(Perceived {
            contact,
            truth,
            observation: log(obs.mean())?,
            estimate: *state.belief().mean(),
            cov_trace: state.belief().cov_trace(),
        })
    }

    fn integrate(&mut self, command: &Twist, dt: f64, t: f64) -> Result<(), SimError> {
        self.pose = (self.pose * exp(&(*command * dt))).orthonormalized();
        let p = self.pose.translation();
        if !self.pose.is_finite() || !command.is_finite() {
            return Err(self.diverged(t, "non-finite pose or command".into()));
        }
        if p.norm() > DIVERGENCE_LIMIT {
            return Err(self.diverged(t, format!("position {:.1} mm from origin", p.norm())));
        }
        Ok(())
    }

    fn diverged(&self, t: f64, detail: String) -> SimError {
        SimError::Divergence {
            t,
            arm: self.name.clone(),
            detail,
        }
    }

    fn record(&self, t: f64, command: &Twist, p: &Perceived) -> TrajectoryRecord {
        TrajectoryRecord {
            t,
            arm: self.name.clone(),
            pose: self.pose,
            twist: *command,
            belief_cov_trace: p.cov_trace,
            belief: log(&p.estimate).map(|x| x.to_array()).unwrap_or([f64::NAN; 6]),
            observation: p.observation.to_array(),
            truth: p.truth.to_array(),
            contact_depth: Some(p.contact.depth),
            normal_angle_deg: Some(p.contact.normal_angle.to_degrees()),
            bearing_deg: None,
            target_distance: None,
        }
    }
}

fn dynamics_noise(sc: &Scenario) -> Result<DynamicsNoise, SimError> {
    Ok(match sc.perception {
        Perception::Filtered { sigma } => default_dynamics_noise(sigma)?,
        Perception::Ideal => DynamicsNoise::zero(),
    })
}

/// Turns a lost contact into a recorded failure; other errors abort the run.
fn absorb<T>(r: Result<T, SimError>, metrics: &mut Metrics, t: f64, arm: &str) -> Result<Option<T>, SimError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(SimError::NoContact(why)) => {
            metrics.failure = Some(format!("{arm} lost contact at t = {t:.3} s: {why}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn steps(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize
}

/// Runs one scenario. Identical scenarios and RNG streams give identical outputs.
pub fn run_scenario<R: Rng + ?Sized>(sc: &Scenario, rng: &mut R) -> Result<RunOutput, SimError> {
    sc.validate()?;
    match &sc.task {
        Task::Track { motion } => run_track(sc, motion, rng),
        Task::Follow {
            surface,
            speed,
            directions_deg,
            start_deg,
        } => run_follow(sc, *surface, *speed, directions_deg, *start_deg, rng),
        Task::PushSingle | Task::PushDual => run_push(sc, rng),
    }
}

fn run_track<R: Rng + ?Sized>(sc: &Scenario, motion: &LeaderMotion, rng: &mut R) -> Result<RunOutput, SimError> {
    let noise = dynamics_noise(sc)?;
    let mut plate = SurfaceModel::new(SurfaceKind::Flat, Pose::identity())?;
    let reference = sc.servo.reference_contact_pose.inverse();
    let start_depth = reference.translation().z;
    let mut follower = Arm::new("follower", sensor_pose_at(&plate, &Vector3::zeros(), start_depth, &Vector3::x())?);
    let duration = motion.duration().unwrap_or(sc.duration);
    let n = steps(duration, sc.dt);
    let mut log = TrajectoryLog::default();
    let mut metrics = Metrics::new("track");
    let (mut err_mm, mut err_deg, mut depth_err, mut angle) = (Stat::default(), Stat::default(), Stat::default(), Stat::default());
    let mut completed = 0;
    for k in 0..n {
        let t = k as f64 * sc.dt;
        let v = motion.twist(t);
        let Some(p) = absorb(follower.perceive(&plate, sc, &noise, rng), &mut metrics, t, "follower")? else {
            break;
        };
        let out = servo_step(&sc.servo, &follower.pid, &p.estimate, sc.dt)?;
        follower.pid = out.pid;
        log.push(TrajectoryRecord {
            t,
            arm: "leader".into(),
            pose: plate.pose,
            twist: v,
            belief_cov_trace: 0.0,
            belief: [0.0; 6],
            observation: [0.0; 6],
            truth: [0.0; 6],
            contact_depth: None,
            normal_angle_deg: None,
            bearing_deg: None,
            target_distance: None,
        });
        log.push(follower.record(t, &out.command, &p));
        if t >= sc.transient {
            let e = reference.inverse() * p.contact.sensor_in_feature;
            err_mm.add(e.translation().norm());
            err_deg.add(e.rotation_angle().to_degrees());
            depth_err.add((p.contact.depth - start_depth).abs());
            angle.add(p.contact.normal_angle.to_degrees());
        }
        follower.integrate(&out.command, sc.dt, t)?;
        plate.pose = (plate.pose * exp(&(v * sc.dt))).orthonormalized();
        completed = k + 1;
    }
    metrics.mean_pose_error_mm = err_mm.mean();
    metrics.mean_pose_error_deg = err_deg.mean();
    metrics.mean_depth_error_mm = depth_err.mean();
    metrics.max_depth_error_mm = depth_err.max();
    metrics.mean_normal_angle_deg = angle.mean();
    metrics.settled = metrics.failure.is_none();
    metrics.steps = completed;
    metrics.runtime_s = completed as f64 * sc.dt;
    Ok(RunOutput { log, metrics })
}

fn run_follow<R: Rng + ?Sized>(
    sc: &Scenario,
    kind: SurfaceKind,
    speed: f64,
    directions_deg: &[f64],
    start_deg: f64,
    rng: &mut R,
) -> Result<RunOutput, SimError> {
    let noise = dynamics_noise(sc)?;
    let surface = SurfaceModel::new(kind, Pose::identity())?;
    let reference = sc.servo.reference_contact_pose.inverse();
    let ref_depth = reference.translation().z;
    let start = match kind {
        SurfaceKind::Flat => Vector3::zeros(),
        SurfaceKind::Ramp { radius, .. } => {
            let a = start_deg.to_radians();
            Vector3::new(0.0, radius * a.sin(), radius * (a.cos() - 1.0))
        }
        SurfaceKind::Hemisphere { radius } => {
            let a = start_deg.to_radians();
            Vector3::new(0.0, radius * a.sin(), radius * (a.cos() - 1.0))
        }
    };
    let n = steps(sc.duration, sc.dt);
    let mut log = TrajectoryLog::default();
    let mut metrics = Metrics::new("follow");
    let (mut depth_err, mut angle) = (Stat::default(), Stat::default());
    let mut net = Stat::default();
    let mut completed = 0;
    'paths: for (i, dir) in directions_deg.iter().enumerate() {
        let mut servo = sc.servo;
        let d = dir.to_radians();
        servo.feedforward_twist = Twist::from_array([speed * d.cos(), speed * d.sin(), 0.0, 0.0, 0.0, 0.0]);
        let name = if directions_deg.len() == 1 {
            "follower".to_string()
        } else {
            format!("path{i}")
        };
        let mut arm = Arm::new(&name, sensor_pose_at(&surface, &start, ref_depth, &Vector3::x())?);
        let origin = *arm.pose.translation();
        for k in 0..n {
            let t = k as f64 * sc.dt;
            let Some(p) = absorb(arm.perceive(&surface, sc, &noise, rng), &mut metrics, t, &name)? else {
                break 'paths;
            };
            let out = servo_step(&servo, &arm.pid, &p.estimate, sc.dt)?;
            arm.pid = out.pid;
            log.push(arm.record(t, &out.command, &p));
            if t >= sc.transient {
                depth_err.add((p.contact.depth - ref_depth).abs());
                angle.add(p.contact.normal_angle.to_degrees());
            }
            arm.integrate(&out.command, sc.dt, t)?;
            completed += 1;
        }
        net.add((arm.pose.translation() - origin).norm());
    }
    metrics.mean_depth_error_mm = depth_err.mean();
    metrics.max_depth_error_mm = depth_err.max();
    metrics.mean_normal_angle_deg = angle.mean();
    metrics.net_tangential_mm = net.mean();
    metrics.settled = metrics.failure.is_none();
    metrics.steps = completed;
    metrics.runtime_s = completed as f64 * sc.dt;
    Ok(RunOutput { log, metrics })
}

/// Time constant (s) of the slowest closed-loop pole of one servo channel, with
/// the arm modelled as a pure integrator of the commanded velocity:
/// `(1 + kd) s^2 + kp s + ki = 0`. `None` without integral action.
pub fn slow_time_constant(servo: &ServoConfig, channel: usize) -> Option<f64> {
    let (kp, ki, kd) = (servo.pid.kp[channel], servo.pid.ki[channel], servo.pid.kd[channel]);
    if !(ki > 0.0) {
        return None;
    }
    let a = 1.0 + kd;
    let disc = kp * kp - 4.0 * a * ki;
    let rate = if disc >= 0.0 { (kp - disc.sqrt()) / (2.0 * a) } else { kp / (2.0 * a) };
    Some(1.0 / rate)
}

fn plane_point(p: &Pose) -> Vector2<f64> {
    let t = p.translation();
    Vector2::new(t.y, t.z)
}

fn run_push<R: Rng + ?Sized>(sc: &Scenario, rng: &mut R) -> Result<RunOutput, SimError> {
    let setup = sc.push.as_ref().expect("validated");
    let dual = sc.task == Task::PushDual;
    let noise = dynamics_noise(sc)?;
    let start = Vector2::new(setup.start[0], setup.start[1]);
    let target = Vector2::new(setup.target[0], setup.target[1]);
    // Sensor axis along world +y, the face it touches sits just in front of it.
    let mut object = PlanarObject {
        face_origin: start + Vector2::new(1.0, 0.0) * (TIP_RADIUS - setup.push_depth),
        heading: std::f64::consts::FRAC_PI_2,
        preset: setup.object.clone(),
        push_depth: setup.push_depth,
        height: setup.height,
    };
    let mut front = SurfaceModel::new(SurfaceKind::Flat, object.face_pose(false))?;
    let mut back = SurfaceModel::new(SurfaceKind::Flat, object.face_pose(true))?;
    let mut pusher = Arm::new("pusher", sensor_pose_at(&front, &Vector3::zeros(), setup.push_depth, &Vector3::x())?);
    let stab_ref = sc.servo.reference_contact_pose.inverse();
    let stab_depth = stab_ref.translation().z;
    let mut stabiliser = Arm::new("stabiliser", sensor_pose_at(&back, &Vector3::zeros(), stab_depth, &Vector3::x())?);
    let mut bearing_pid = PidState::<1>::default();

    let n = steps(sc.duration, sc.dt);
    let mut log = TrajectoryLog::default();
    let mut metrics = Metrics::new(sc.task.name());
    let mut depth_err = Stat::default();
    let mut margin = 1.0;
    let mut terminated = false;
    let mut toppled = false;
    let mut completed = 0;
    for k in 0..n {
        let t = k as f64 * sc.dt;
        let Some(lp) = absorb(pusher.perceive(&front, sc, &noise, rng), &mut metrics, t, "pusher")? else {
            break;
        };
        let out = push_step(&setup.leader, &pusher.pid, &bearing_pid, &lp.estimate, &pusher.pose, sc.dt)?;
        pusher.pid = out.pid;
        bearing_pid = out.bearing_pid;
        let mut rec = pusher.record(t, &out.command, &lp);
        rec.bearing_deg = Some(out.bearing.to_degrees());
        rec.target_distance = Some(out.tip_distance);
        log.push(rec);

        let mut supported = false;
        let mut stab_command = None;
        if dual {
            let Some(sp) = absorb(stabiliser.perceive(&back, sc, &noise, rng), &mut metrics, t, "stabiliser")? else {
                break;
            };
            let sout = servo_step(&sc.servo, &stabiliser.pid, &sp.estimate, sc.dt)?;
            stabiliser.pid = sout.pid;
            log.push(stabiliser.record(t, &sout.command, &sp));
            let err = (sp.contact.depth - stab_depth).abs();
            // Pressing harder still holds the object; backing off does not.
            supported = sp.contact.depth >= stab_depth - SUPPORT_TOLERANCE;
            if t >= sc.transient {
                depth_err.add(err);
            }
            stab_command = Some(sout.command);
        }
        completed = k + 1;

        if out.status == PushStatus::Terminated {
            terminated = true;
            metrics.final_target_error_mm = Some(object.normal_line_offset(&plane_point(&pusher.pose), &target));
            break;
        }
        if object.preset.tall {
            margin = if supported {
                (margin + sc.dt / TOPPLE_TIME).min(1.0)
            } else {
                margin - sc.dt / TOPPLE_TIME
            };
            if margin <= 0.0 {
                toppled = true;
                metrics.failure = Some(format!("object toppled at t = {t:.3} s"));
                break;
            }
        }

        let before = plane_point(&pusher.pose);
        pusher.integrate(&out.command, sc.dt, t)?;
        if let Some(c) = stab_command {
            stabiliser.integrate(&c, sc.dt, t)?;
        }
        object.respond(&before, &plane_point(&pusher.pose), TIP_RADIUS);
        front.pose = object.face_pose(false);
        back.pose = object.face_pose(true);
    }
    if !terminated && metrics.failure.is_none() {
        metrics.failure = Some(format!("target not reached within {} s", sc.duration));
    }
    metrics.terminated = Some(terminated);
    metrics.toppled = object.preset.tall.then_some(toppled);
    if dual {
        metrics.mean_depth_error_mm = depth_err.mean();
        metrics.max_depth_error_mm = depth_err.max();
    }
    metrics.settled = terminated && !toppled;
    metrics.steps = completed;
    metrics.runtime_s = completed as f64 * sc.dt;
    Ok(RunOutput { log, metrics })
}
