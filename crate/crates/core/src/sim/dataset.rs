//! Synthetic labelled contact poses: the data-collection procedure run against a
//! simulated flat surface.

use std::io::Write;

use nalgebra::Vector3;
use rand::Rng;

use super::observation::ObservationModel;
use super::surface::{sensor_pose_at, Anchor, ContactTracker, SurfaceKind, SurfaceModel};
use super::SimError;
use crate::filter::StudyStep;
use crate::gdnmath::{sample_contact_pose, Row, SampleSpec};
use crate::liegroup::{euler_to_pose, log, Pose, Twist};

pub const DATASET_COLUMNS: [&str; 12] = [
    "x", "y", "z", "alpha", "beta", "gamma", "xi0", "xi1", "xi2", "xi3", "xi4", "xi5",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetRow {
    /// Sampled contact pose, Euler `(x, y, z, alpha, beta, gamma)` in mm and rad.
    pub euler: Row,
    /// Surface pose in the sensor frame, exponential coordinates.
    pub label: Twist,
}

/// Places a sensor at the Euler contact pose `euler` on a flat surface, the way the
/// data-collection rig does: touch down normally, anchor, then shear and tilt.
/// Returns the surface-in-sensor pose the contact model reports.
pub fn collect_contact(euler: &Row) -> Result<Pose, SimError> {
    let surface = SurfaceModel::new(SurfaceKind::Flat, Pose::identity())?;
    let touch = sensor_pose_at(&surface, &Vector3::zeros(), 0.0, &Vector3::x())?;
    let mut tracker = ContactTracker::anchored(Anchor {
        point: Vector3::zeros(),
        x_axis: Vector3::x(),
    });
    let sensor = touch * euler_to_pose(euler);
    let contact = tracker.contact_pose(&surface, &sensor)?;
    Ok(contact.sensor_in_feature.inverse())
}

pub fn generate_dataset<R: Rng + ?Sized>(n: usize, spec: &SampleSpec, rng: &mut R) -> Result<Vec<DatasetRow>, SimError> {
    spec.validate()?;
    (0..n)
        .map(|_| {
            let euler = sample_contact_pose(spec, rng);
            let label = log(&collect_contact(&euler)?)?;
            Ok(DatasetRow { euler, label })
        })
        .collect()
}

pub fn write_dataset_csv<W: Write>(rows: &[DatasetRow], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DATASET_COLUMNS)?;
    for r in rows {
        let rec: Vec<String> = r
            .euler
            .iter()
            .chain(r.label.to_array().iter())
            .map(|v| v.to_string())
            .collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Independent sampled contacts with noisy observations, in the layout the filter study expects.
pub fn study_sequence<R: Rng + ?Sized>(
    n: usize,
    spec: &SampleSpec,
    model: &ObservationModel,
    rng: &mut R,
) -> Result<Vec<StudyStep>, SimError> {
    spec.validate()?;
    model.validate()?;
    (0..n)
        .map(|_| {
            let euler = sample_contact_pose(spec, rng);
            let truth = collect_contact(&euler)?;
            let observation = model.observe(&truth.inverse(), rng)?;
            Ok(StudyStep { truth, observation })
        })
        .collect()
}
