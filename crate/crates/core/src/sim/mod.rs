//! Desk-scale closed-loop simulator: surfaces, a synthetic contact-pose sensor,
//! planar pushing, and runners for the tracking, following and pushing tasks.

pub mod dataset;
pub mod leader;
pub mod log;
pub mod observation;
pub mod push;
pub mod scenario;
pub mod surface;

use thiserror::Error;

use crate::control::ControlError;
use crate::filter::FilterError;
use crate::gdnmath::GdnError;
use crate::liegroup::LieError;
use crate::uncertainty::UncertaintyError;

pub use dataset::{generate_dataset, study_sequence, DatasetRow, DATASET_COLUMNS};
pub use leader::{leader_twist, LeaderMotion};
pub use log::{Metrics, TrajectoryLog, TrajectoryRecord, TRAJECTORY_COLUMNS};
pub use observation::{reference_stds, ObservationModel, REFERENCE_MAE};
pub use push::{bearing_sensitivity, object_preset, push_object_step, BearingSensitivity, PushedObject};
pub use scenario::{run_scenario, Perception, PushSetup, RunOutput, Scenario, Task};
pub use surface::{contact_pose, Contact, ContactTracker, SurfaceKind, SurfaceModel};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no contact: {0}")]
    NoContact(String),
    #[error("push step ({dy}, {dz}) mm exceeds the differential limit")]
    StepTooLarge { dy: f64, dz: f64 },
    #[error("target coincides with the contact point")]
    SingularTarget,
    #[error("divergence at t = {t:.3} s on arm {arm}: {detail}")]
    Divergence { t: f64, arm: String, detail: String },
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Gdn(#[from] GdnError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}
