//! TOML run configuration: schema, validation and resolution into core types.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use tactile_core::control::{push_preset, servo_preset, Interval, PidConfig, ServoConfig};
use tactile_core::filter::{default_dynamics_noise, SigmaPsi, DEPLOYMENT_SIGMA};
use tactile_core::gdnmath::SampleSpec;
use tactile_core::liegroup::{euler_to_pose, Twist};
use tactile_core::sim::scenario::slow_time_constant;
use tactile_core::sim::{LeaderMotion, ObservationModel, Perception, PushSetup, Scenario, SurfaceKind, Task};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub task: Spanned<String>,
    pub seed: Option<u64>,
    /// s
    pub duration: Option<f64>,
    /// s
    pub dt: Option<f64>,
    /// s
    pub transient: Option<f64>,
    #[serde(default)]
    pub leader: LeaderSection,
    pub surface: Option<SurfaceSection>,
    pub object: Option<Spanned<String>>,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub push: PushSection,
    #[serde(default)]
    pub observation: ObservationSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderSection {
    /// `periodic`, `still` or `single_axis`.
    pub motion: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSection {
    /// `flat`, `ramp` or `hemisphere`.
    pub kind: Spanned<String>,
    /// mm
    pub radius: Option<f64>,
    /// deg
    pub span_deg: Option<f64>,
    /// mm/s
    pub speed: Option<f64>,
    /// deg
    pub directions_deg: Option<Vec<f64>>,
    /// deg
    pub start_deg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub preset: Option<Spanned<String>>,
    pub kp: Option<[f64; 6]>,
    pub ki: Option<[f64; 6]>,
    pub kd: Option<[f64; 6]>,
    pub integral_clip: Option<f64>,
    pub output_clip: Option<f64>,
    pub ewma_decay: Option<f64>,
    /// Reference sensor-in-surface pose as Euler `(x, y, z, alpha, beta, gamma)`, mm and rad.
    pub reference: Option<[f64; 6]>,
    /// Feedforward twist `(v, omega)` in mm/s and rad/s.
    pub feedforward: Option<[f64; 6]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushSection {
    pub preset: Option<Spanned<String>>,
    /// mm
    pub switch_off_radius: Option<f64>,
    /// mm
    pub termination_radius: Option<f64>,
    /// Pushing depth of the leader (mm).
    pub depth: Option<f64>,
    /// World `(y, z)` of the object start and the target, mm.
    pub start: Option<[f64; 2]>,
    pub target: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    /// Per-component standard deviation of the exponential-coordinate noise.
    pub std: Option<[f64; 6]>,
    /// Per-component mean absolute error; converted to a standard deviation.
    pub mae: Option<[f64; 6]>,
    pub cov_multiplier: Option<f64>,
    /// `filtered` or `ideal`.
    pub perception: Option<Spanned<String>>,
    /// Dynamics noise scale of the deployed filter.
    pub sigma_psi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub steps: Option<usize>,
    /// Noise levels; the string `"inf"` is the unfiltered row.
    pub sigma_psi: Option<Vec<GridEntry>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum GridEntry {
    Level(f64),
    Name(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub samples: Option<usize>,
    /// mm
    pub r_max: Option<f64>,
    /// mm
    pub z_range: Option<[f64; 2]>,
    /// deg
    pub phi_max_deg: Option<f64>,
    /// deg
    pub gamma_range_deg: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// File name prefix inside the output directory.
    pub prefix: Option<String>,
}

pub const DEFAULT_STUDY_STEPS: usize = 2000;
pub const DEFAULT_DATASET_SAMPLES: usize = 1000;
pub const DEFAULT_GRID: [SigmaPsi; 5] = [
    SigmaPsi::Infinite,
    SigmaPsi::Finite(10.0),
    SigmaPsi::Finite(1.0),
    SigmaPsi::Finite(0.1),
    SigmaPsi::Finite(0.01),
];

/// A config problem, anchored to a line of the source when one is known.
#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.path, l, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

/// What a config resolves to.
#[derive(Debug)]
pub enum Job {
    Scenario(Box<Scenario>),
    FilterStudy {
        steps: usize,
        grid: Vec<SigmaPsi>,
        observation: ObservationModel,
        spec: SampleSpec,
    },
    Dataset {
        samples: usize,
        spec: SampleSpec,
    },
}

#[derive(Debug)]
pub struct Resolved {
    pub task: String,
    pub seed: u64,
    pub prefix: String,
    pub job: Job,
}

pub const TASKS: [&str; 6] = ["track", "follow", "push_single", "push_dual", "filter_study", "gen_dataset"];

struct Ctx<'a> {
    path: &'a str,
    source: &'a str,
}

impl Ctx<'_> {
    fn line_of(&self, span: &Range<usize>) -> usize {
        self.source[..span.start.min(self.source.len())].matches('\n').count() + 1
    }

    fn at<T>(&self, s: &Spanned<T>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.to_string(),
            line: Some(self.line_of(&s.span())),
            message: message.into(),
        }
    }

    fn err(&self, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.to_string(),
            line: None,
            message: message.into(),
        }
    }
}

/// Reads, parses and resolves a config file.
pub fn validate_config(path: &Path) -> Result<Resolved, ConfigError> {
    let shown = path.display().to_string();
    let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: shown.clone(),
        line: None,
        message: format!("cannot read: {e}"),
    })?;
    parse_config(&shown, &source)
}

pub fn parse_config(path: &str, source: &str) -> Result<Resolved, ConfigError> {
    let ctx = Ctx { path, source };
    let cfg: Config = toml::from_str(source).map_err(|e| ConfigError {
        path: path.to_string(),
        line: e.span().map(|s| ctx.line_of(&s)),
        message: e.message().to_string(),
    })?;
    resolve(&ctx, cfg)
}

fn resolve(ctx: &Ctx, cfg: Config) -> Result<Resolved, ConfigError> {
    let task = cfg.task.get_ref().clone();
    let seed = cfg.seed.unwrap_or(0);
    let prefix = cfg.output.prefix.clone().unwrap_or_default();
    if prefix.contains(['/', '\\']) {
        return Err(ctx.err("output.prefix must be a plain file name prefix"));
    }
    let job = match task.as_str() {
        "track" | "follow" | "push_single" | "push_dual" => Job::Scenario(Box::new(scenario(ctx, &cfg)?)),
        "filter_study" => {
            let steps = cfg.study.steps.unwrap_or(DEFAULT_STUDY_STEPS);
            let grid = match &cfg.study.sigma_psi {
                None => DEFAULT_GRID.to_vec(),
                Some(entries) => grid(ctx, entries)?,
            };
            Job::FilterStudy {
                steps,
                grid,
                observation: observation(ctx, &cfg.observation)?,
                spec: sample_spec(ctx, &cfg.dataset)?,
            }
        }
        "gen_dataset" => {
            let samples = cfg.dataset.samples.unwrap_or(DEFAULT_DATASET_SAMPLES);
            if samples == 0 {
                return Err(ctx.err("dataset.samples must be positive"));
            }
            Job::Dataset {
                samples,
                spec: sample_spec(ctx, &cfg.dataset)?,
            }
        }
        other => {
            return Err(ctx.at(&cfg.task, format!("unknown task `{other}`, expected one of {}", TASKS.join(", "))));
        }
    };
    Ok(Resolved {
        task,
        seed,
        prefix,
        job,
    })
}

fn grid(ctx: &Ctx, entries: &[GridEntry]) -> Result<Vec<SigmaPsi>, ConfigError> {
    if entries.is_empty() {
        return Err(ctx.err("study.sigma_psi is empty"));
    }
    entries
        .iter()
        .map(|e| match e {
            GridEntry::Level(s) if *s > 0.0 && s.is_finite() => Ok(SigmaPsi::Finite(*s)),
            GridEntry::Level(s) => Err(ctx.err(format!("study.sigma_psi: level {s} must be positive"))),
            GridEntry::Name(n) if n == "inf" => Ok(SigmaPsi::Infinite),
            GridEntry::Name(n) => Err(ctx.err(format!("study.sigma_psi: `{n}` is neither a number nor \"inf\""))),
        })
        .collect()
}

fn observation(ctx: &Ctx, o: &ObservationSection) -> Result<ObservationModel, ConfigError> {
    let mut model = ObservationModel::default();
    match (o.std, o.mae) {
        (Some(_), Some(_)) => return Err(ctx.err("observation: give either std or mae, not both")),
        (Some(std), None) => model.std = std,
        // Half-normal noise: E|n| = std * sqrt(2 / pi).
        (None, Some(mae)) => model.std = mae.map(|m| m * (std::f64::consts::PI / 2.0).sqrt()),
        (None, None) => {}
    }
    if let Some(m) = o.cov_multiplier {
        model.cov_multiplier = m;
    }
    model.validate().map_err(|e| ctx.err(format!("observation: {e}")))?;
    Ok(model)
}

fn sample_spec(ctx: &Ctx, d: &DatasetSection) -> Result<SampleSpec, ConfigError> {
    let mut spec = SampleSpec::default();
    if let Some(r) = d.r_max {
        spec.r_max = r;
    }
    if let Some([lo, hi]) = d.z_range {
        spec.z_range = (lo, hi);
    }
    if let Some(p) = d.phi_max_deg {
        spec.phi_max_deg = p;
    }
    if let Some([lo, hi]) = d.gamma_range_deg {
        spec.gamma_range_deg = (lo, hi);
    }
    spec.validate().map_err(|e| ctx.err(format!("dataset: {e}")))?;
    Ok(spec)
}

fn surface_kind(ctx: &Ctx, s: &SurfaceSection) -> Result<SurfaceKind, ConfigError> {
    let kind = match s.kind.get_ref().as_str() {
        "flat" => SurfaceKind::Flat,
        "ramp" => {
            let SurfaceKind::Ramp { radius, span_deg } = SurfaceKind::ramp() else {
                unreachable!()
            };
            SurfaceKind::Ramp {
                radius: s.radius.unwrap_or(radius),
                span_deg: s.span_deg.unwrap_or(span_deg),
            }
        }
        "hemisphere" => {
            let SurfaceKind::Hemisphere { radius } = SurfaceKind::hemisphere() else {
                unreachable!()
            };
            SurfaceKind::Hemisphere {
                radius: s.radius.unwrap_or(radius),
            }
        }
        other => return Err(ctx.at(&s.kind, format!("unknown surface `{other}`, expected flat, ramp or hemisphere"))),
    };
    if matches!(kind, SurfaceKind::Flat) && (s.radius.is_some() || s.span_deg.is_some()) {
        return Err(ctx.at(&s.kind, "a flat surface takes no radius or span_deg"));
    }
    Ok(kind)
}

fn scenario(ctx: &Ctx, cfg: &Config) -> Result<Scenario, ConfigError> {
    let task = cfg.task.get_ref().as_str();
    let pushing = matches!(task, "push_single" | "push_dual");
    if pushing != cfg.object.is_some() {
        return Err(if pushing {
            ctx.at(&cfg.task, format!("task `{task}` needs an `object` field"))
        } else {
            ctx.err(format!("`object` does not apply to task `{task}`"))
        });
    }
    if (task == "follow") != cfg.surface.is_some() {
        return Err(if task == "follow" {
            ctx.at(&cfg.task, "task `follow` needs a [surface] section")
        } else {
            ctx.err(format!("[surface] does not apply to task `{task}`"))
        });
    }
    if task != "track" && cfg.leader.motion.is_some() {
        return Err(ctx.err(format!("[leader] does not apply to task `{task}`")));
    }
    if !pushing && has_push_fields(&cfg.push) {
        return Err(ctx.err(format!("[push] does not apply to task `{task}`")));
    }

    let mut sc = match task {
        "track" => {
            let mut sc = Scenario::track();
            if let Some(m) = &cfg.leader.motion {
                let motion = match m.get_ref().as_str() {
                    "periodic" => LeaderMotion::periodic(),
                    "still" => LeaderMotion::Still,
                    "single_axis" => LeaderMotion::single_axis(),
                    other => return Err(ctx.at(m, format!("unknown leader motion `{other}`"))),
                };
                sc.task = Task::Track { motion };
            }
            sc
        }
        "follow" => {
            let s = cfg.surface.as_ref().expect("checked above");
            let mut sc = Scenario::follow(surface_kind(ctx, s)?);
            if let Task::Follow {
                speed,
                directions_deg,
                start_deg,
                ..
            } = &mut sc.task
            {
                if let Some(v) = s.speed {
                    *speed = v;
                }
                if let Some(d) = &s.directions_deg {
                    *directions_deg = d.clone();
                }
                if let Some(a) = s.start_deg {
                    *start_deg = a;
                }
            }
            sc
        }
        _ => {
            let object = cfg.object.as_ref().expect("checked above");
            let base = if task == "push_single" {
                Scenario::push_single(object.get_ref())
            } else {
                Scenario::push_dual(object.get_ref())
            };
            let mut sc = base.map_err(|e| ctx.at(object, e.to_string()))?;
            apply_push(ctx, &cfg.push, sc.push.as_mut().expect("pushing scenario"))?;
            sc
        }
    };

    if let Some(d) = cfg.duration {
        sc.duration = d;
    }
    if let Some(dt) = cfg.dt {
        sc.dt = dt;
    }
    sc.observation = observation(ctx, &cfg.observation)?;
    sc.perception = perception(ctx, &cfg.observation)?;
    let servo_changed = apply_controller(ctx, &cfg.controller, &mut sc.servo)?;
    match cfg.transient {
        Some(t) => sc.transient = t,
        // The dual-arm default waits out the stabiliser's slowest pole.
        None if task == "push_dual" && servo_changed => {
            if let Some(tau) = slow_time_constant(&sc.servo, 2) {
                sc.transient = tau;
            }
        }
        None => {}
    }
    sc.validate().map_err(|e| ctx.err(e.to_string()))?;
    Ok(sc)
}

fn has_push_fields(p: &PushSection) -> bool {
    p.preset.is_some()
        || p.switch_off_radius.is_some()
        || p.termination_radius.is_some()
        || p.depth.is_some()
        || p.start.is_some()
        || p.target.is_some()
}

fn perception(ctx: &Ctx, o: &ObservationSection) -> Result<Perception, ConfigError> {
    let name = o.perception.as_ref().map(|p| p.get_ref().as_str()).unwrap_or("filtered");
    match name {
        "filtered" => {
            let sigma = o.sigma_psi.unwrap_or(DEPLOYMENT_SIGMA);
            default_dynamics_noise(sigma).map_err(|e| ctx.err(format!("observation.sigma_psi: {e}")))?;
            Ok(Perception::Filtered { sigma })
        }
        "ideal" => {
            if o.sigma_psi.is_some() {
                return Err(ctx.err("observation.sigma_psi has no effect with ideal perception"));
            }
            Ok(Perception::Ideal)
        }
        other => Err(ctx.at(o.perception.as_ref().unwrap(), format!("unknown perception `{other}`, expected filtered or ideal"))),
    }
}

/// Applies preset and gain overrides; reports whether anything changed.
fn apply_controller(ctx: &Ctx, c: &ControllerSection, servo: &mut ServoConfig) -> Result<bool, ConfigError> {
    let mut changed = false;
    if let Some(p) = &c.preset {
        let mut preset = servo_preset(p.get_ref()).map_err(|e| ctx.at(p, e.to_string()))?;
        // Surface following sets its own tangential feedforward.
        preset.feedforward_twist = servo.feedforward_twist;
        *servo = preset;
        changed = true;
    }
    let pid: &mut PidConfig<6> = &mut servo.pid;
    for (slot, value) in [(&mut pid.kp, c.kp), (&mut pid.ki, c.ki), (&mut pid.kd, c.kd)] {
        if let Some(v) = value {
            *slot = v;
            changed = true;
        }
    }
    if let Some(b) = c.integral_clip {
        pid.integral_clip = [Interval::symmetric(b); 6];
        changed = true;
    }
    if let Some(b) = c.output_clip {
        pid.output_clip = [Interval::symmetric(b); 6];
        changed = true;
    }
    if let Some(d) = c.ewma_decay {
        pid.ewma_decay = d;
        changed = true;
    }
    if let Some(r) = c.reference {
        servo.reference_contact_pose = euler_to_pose(&r).inverse();
        changed = true;
    }
    if let Some(f) = c.feedforward {
        servo.feedforward_twist = Twist::from_array(f);
        changed = true;
    }
    servo.pid.validate().map_err(|e| ctx.err(format!("controller: {e}")))?;
    Ok(changed)
}

fn apply_push(ctx: &Ctx, p: &PushSection, setup: &mut PushSetup) -> Result<(), ConfigError> {
    if let Some(s) = p.start {
        setup.start = s;
    }
    if let Some(t) = p.target {
        setup.target = t;
    }
    if let Some(d) = p.depth {
        setup.push_depth = d;
    }
    let target = setup.target_pose();
    if let Some(name) = &p.preset {
        setup.leader = push_preset(name.get_ref(), target).map_err(|e| ctx.at(name, e.to_string()))?;
    }
    setup.leader.target_pose_in_work = target;
    if let Some(r) = p.switch_off_radius {
        setup.leader.switch_off_radius = r;
    }
    if let Some(r) = p.termination_radius {
        setup.leader.termination_radius = r;
    }
    setup.leader.validate().map_err(|e| ctx.err(format!("push: {e}")))?;
    Ok(())
}

/// Human-readable summary of a resolved config, with units.
pub fn summary(r: &Resolved) -> String {
    let mut out = format!("task: {}\nseed: {}\n", r.task, r.seed);
    match &r.job {
        Job::Scenario(sc) => {
            out += &format!("duration: {} s\ndt: {} s\ntransient: {} s\n", sc.duration, sc.dt, sc.transient);
            match &sc.task {
                Task::Track { motion } => out += &format!("leader: {motion:?}\n"),
                Task::Follow {
                    surface,
                    speed,
                    directions_deg,
                    start_deg,
                } => {
                    out += &format!(
                        "surface: {surface:?} (mm, deg)\nspeed: {speed} mm/s\ndirections: {directions_deg:?} deg\nstart: {start_deg} deg\n"
                    )
                }
                Task::PushSingle | Task::PushDual => {}
            }
            let pid = &sc.servo.pid;
            out += &format!(
                "servo kp: {:?} 1/s\nservo ki: {:?} 1/s^2\nservo kd: {:?}\n",
                pid.kp, pid.ki, pid.kd
            );
            out += &format!("observation std: {:?} (mm, rad)\n", sc.observation.std);
            out += &format!("perception: {:?}\n", sc.perception);
            if let Some(p) = &sc.push {
                out += &format!(
                    "object: {} (alpha {}, r0 {} mm)\nstart: {:?} mm\ntarget: {:?} mm\nswitch_off_radius: {} mm\ntermination_radius: {} mm\n",
                    p.object.name,
                    p.object.alpha,
                    p.object.r0,
                    p.start,
                    p.target,
                    p.leader.switch_off_radius,
                    p.leader.termination_radius
                );
            }
        }
        Job::FilterStudy {
            steps,
            grid,
            observation,
            ..
        } => {
            let g: Vec<String> = grid.iter().map(|s| s.to_string()).collect();
            out += &format!(
                "steps: {steps}\nsigma_psi: [{}]\nobservation std: {:?} (mm, rad)\n",
                g.join(", "),
                observation.std
            );
        }
        Job::Dataset { samples, spec } => {
            out += &format!(
                "samples: {samples}\nr_max: {} mm\nz_range: {:?} mm\nphi_max: {} deg\ngamma_range: {:?} deg\n",
                spec.r_max, spec.z_range, spec.phi_max_deg, spec.gamma_range_deg
            );
        }
    }
    out
}
