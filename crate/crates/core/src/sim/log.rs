//! Trajectory records and run metrics, with their CSV and JSON writers.

use std::io::Write;

use serde::Serialize;

use super::SimError;
use crate::liegroup::{Pose, Twist};

/// CSV header of [`TrajectoryLog::write_csv`], in column order.
pub const TRAJECTORY_COLUMNS: [&str; 38] = [
    "t",
    "arm",
    "x",
    "y",
    "z",
    "qw",
    "qx",
    "qy",
    "qz",
    "twist0",
    "twist1",
    "twist2",
    "twist3",
    "twist4",
    "twist5",
    "belief_cov_trace",
    "contact_depth",
    "normal_angle_deg",
    "bearing_deg",
    "target_distance",
    "belief0",
    "belief1",
    "belief2",
    "belief3",
    "belief4",
    "belief5",
    "obs0",
    "obs1",
    "obs2",
    "obs3",
    "obs4",
    "obs5",
    "true0",
    "true1",
    "true2",
    "true3",
    "true4",
    "true5",
];

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub arm: String,
    /// End-effector pose in the world.
    pub pose: Pose,
    pub twist: Twist,
    pub belief_cov_trace: f64,
    /// Filtered surface-in-sensor pose, exponential coordinates.
    pub belief: [f64; 6],
    /// Raw observed surface-in-sensor pose, exponential coordinates.
    pub observation: [f64; 6],
    /// True surface-in-sensor pose, exponential coordinates.
    pub truth: [f64; 6],
    pub contact_depth: Option<f64>,
    pub normal_angle_deg: Option<f64>,
    pub bearing_deg: Option<f64>,
    pub target_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrajectoryLog {
    pub records: Vec<TrajectoryRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrajectoryLog {
    pub fn push(&mut self, record: TrajectoryRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn for_arm<'a>(&'a self, arm: &'a str) -> impl Iterator<Item = &'a TrajectoryRecord> + 'a {
        self.records.iter().filter(move |r| r.arm == arm)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRAJECTORY_COLUMNS)?;
        for r in &self.records {
            let t = r.pose.translation();
            let q = r.pose.quaternion();
            let mut row = vec![r.t.to_string(), r.arm.clone(), t.x.to_string(), t.y.to_string(), t.z.to_string()];
            row.extend(q.iter().map(|v| v.to_string()));
            row.extend(r.twist.to_array().iter().map(|v| v.to_string()));
            row.push(r.belief_cov_trace.to_string());
            row.push(opt(r.contact_depth));
            row.push(opt(r.normal_angle_deg));
            row.push(opt(r.bearing_deg));
            row.push(opt(r.target_distance));
            row.extend(r.belief.iter().map(|v| v.to_string()));
            row.extend(r.observation.iter().map(|v| v.to_string()));
            row.extend(r.truth.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Summary of one scenario run. Fields that do not apply to the task are `null`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub task: String,
    pub final_target_error_mm: Option<f64>,
    pub mean_depth_error_mm: Option<f64>,
    pub max_depth_error_mm: Option<f64>,
    pub mean_normal_angle_deg: Option<f64>,
    pub mean_pose_error_mm: Option<f64>,
    pub mean_pose_error_deg: Option<f64>,
    pub net_tangential_mm: Option<f64>,
    pub terminated: Option<bool>,
    pub toppled: Option<bool>,
    pub settled: bool,
    pub failure: Option<String>,
    /// Simulated duration (s).
    pub runtime_s: f64,
    pub steps: usize,
}

impl Metrics {
    pub fn new(task: &str) -> Self {
        Self {
            task: task.to_string(),
            final_target_error_mm: None,
            mean_depth_error_mm: None,
            max_depth_error_mm: None,
            mean_normal_angle_deg: None,
            mean_pose_error_mm: None,
            mean_pose_error_deg: None,
            net_tangential_mm: None,
            terminated: None,
            toppled: None,
            settled: false,
            failure: None,
            runtime_s: 0.0,
            steps: 0,
        }
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<(), SimError> {
        serde_json::to_writer_pretty(out, self).map_err(|e| SimError::Io(e.to_string()))
    }
}
