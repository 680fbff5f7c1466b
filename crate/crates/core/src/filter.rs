//! Recursive discriminative filter for the sensor-to-surface pose.
//!
//! Prediction moves the belief by the sensor's own motion between steps; correction
//! fuses the result with the current observation.

use std::fmt;
use std::io::Write;

use nalgebra::{Matrix6, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::liegroup::{exp, log, LieError, Pose, Twist};
use crate::uncertainty::{fuse, symmetrize, PoseGaussian, UncertaintyError, DEFAULT_FUSE_ITERATIONS};

/// Dynamics noise scale used on the robot when nothing else is configured.
pub const DEPLOYMENT_SIGMA: f64 = 0.5;
/// Shortest sequence accepted by [`filter_study`].
pub const MIN_STUDY_LENGTH: usize = 100;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("dynamics noise scale must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("dynamics noise covariance is not positive semi-definite")]
    NotPositiveSemidefinite,
    #[error("study sequence has {0} steps, at least {MIN_STUDY_LENGTH} are required")]
    SequenceTooShort(usize),
    #[error("failed to write study table: {0}")]
    Io(#[from] csv::Error),
}

/// Covariance of the left perturbation added at every prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicsNoise {
    cov: Matrix6<f64>,
}

impl DynamicsNoise {
    pub fn new(cov: Matrix6<f64>) -> Result<Self, FilterError> {
        let cov = symmetrize(&cov);
        if cov.iter().any(|v| !v.is_finite()) || cov.symmetric_eigenvalues().min() < -1e-12 {
            return Err(FilterError::NotPositiveSemidefinite);
        }
        Ok(Self { cov })
    }

    pub fn zero() -> Self {
        Self {
            cov: Matrix6::zeros(),
        }
    }

    pub fn cov(&self) -> &Matrix6<f64> {
        &self.cov
    }
}

fn noise_diagonal(sigma: f64) -> Vector6<f64> {
    let s2 = sigma * sigma;
    let r2 = s2 * (std::f64::consts::PI / 180.0).powi(2);
    Vector6::new(s2, s2, s2, r2, r2, r2)
}

/// `diag(s^2, s^2, s^2, (s deg)^2, (s deg)^2, (s deg)^2)`: mm for translation, degrees for rotation.
pub fn default_dynamics_noise(sigma: f64) -> Result<DynamicsNoise, FilterError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(FilterError::InvalidSigma(sigma));
    }
    Ok(DynamicsNoise {
        cov: Matrix6::from_diagonal(&noise_diagonal(sigma)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterState {
    belief: PoseGaussian,
    prev_sensor_pose: Pose,
    step_index: u64,
}

impl FilterState {
    /// Starts the filter from the first observation.
    pub fn init(obs: PoseGaussian, sensor_pose: Pose) -> Self {
        Self {
            belief: obs,
            prev_sensor_pose: sensor_pose,
            step_index: 0,
        }
    }

    pub fn belief(&self) -> &PoseGaussian {
        &self.belief
    }

    pub fn prev_sensor_pose(&self) -> &Pose {
        &self.prev_sensor_pose
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Transition of the sensor-to-surface pose implied by the sensor moving to `sensor_pose_now`.
    pub fn transition_to(&self, sensor_pose_now: &Pose) -> Pose {
        sensor_pose_now.inverse() * self.prev_sensor_pose
    }

    pub fn predict(&self, transition: &Pose, noise: &DynamicsNoise) -> PoseGaussian {
        self.belief.transform(transition, &noise.cov)
    }

    /// One prediction/correction cycle with the transition taken from sensor poses.
    pub fn step(
        &self,
        obs: &PoseGaussian,
        sensor_pose_now: &Pose,
        noise: &DynamicsNoise,
    ) -> Result<Self, FilterError> {
        let t = self.transition_to(sensor_pose_now);
        self.step_with_transition(obs, &t, sensor_pose_now, noise)
    }

    /// One prediction/correction cycle with an explicitly supplied transition.
    pub fn step_with_transition(
        &self,
        obs: &PoseGaussian,
        transition: &Pose,
        sensor_pose_now: &Pose,
        noise: &DynamicsNoise,
    ) -> Result<Self, FilterError> {
        let predicted = self.predict(transition, noise);
        let belief = fuse(obs, &predicted, DEFAULT_FUSE_ITERATIONS)?;
        Ok(Self {
            belief,
            prev_sensor_pose: *sensor_pose_now,
            step_index: self.step_index + 1,
        })
    }
}

/// Noisy transition `exp(psi) x_now x_prev^-1` with `psi` drawn from the dynamics noise.
pub fn synthetic_transition<R: Rng + ?Sized>(
    x_prev: &Pose,
    x_now: &Pose,
    sigma_psi: f64,
    rng: &mut R,
) -> Pose {
    let exact = x_now * &x_prev.inverse();
    if sigma_psi == 0.0 {
        return exact;
    }
    let std = noise_diagonal(sigma_psi).map(f64::sqrt);
    let psi = Vector6::from_fn(|i, _| std[i] * rng.sample::<f64, _>(StandardNormal));
    exp(&Twist::from_vector(psi)) * exact
}

/// Dynamics noise level of one study row; `Infinite` bypasses the filter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaPsi {
    Finite(f64),
    Infinite,
}

impl fmt::Display for SigmaPsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaPsi::Finite(s) => write!(f, "{s}"),
            SigmaPsi::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StudyStep {
    pub truth: Pose,
    pub observation: PoseGaussian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub sigma_psi: SigmaPsi,
    /// Per-component MAE in exponential coordinates, `(v_x, v_y, v_z, w_x, w_y, w_z)`.
    pub mae: [f64; 6],
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
}

pub const STUDY_COLUMNS: [&str; 7] = ["sigma_psi", "v_x", "v_y", "v_z", "omega_x", "omega_y", "omega_z"];

impl StudyTable {
    pub fn row(&self, sigma: SigmaPsi) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.sigma_psi == sigma)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FilterError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(STUDY_COLUMNS)?;
        for row in &self.rows {
            let mut rec = vec![row.sigma_psi.to_string()];
            rec.extend(row.mae.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Runs the filter over `sequence` once per dynamics noise level.
///
/// Transitions come from [`synthetic_transition`] with the row's noise level and the
/// filter uses the same level for its own dynamics noise.
pub fn filter_study<R: Rng + ?Sized>(
    sequence: &[StudyStep],
    grid: &[SigmaPsi],
    rng: &mut R,
) -> Result<StudyTable, FilterError> {
    if sequence.len() < MIN_STUDY_LENGTH {
        return Err(FilterError::SequenceTooShort(sequence.len()));
    }
    let truth_coords = sequence
        .iter()
        .map(|s| log(&s.truth).map(Vector6::from))
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = StudyTable::default();
    for &sigma in grid {
        let mut abs_sum = Vector6::zeros();
        let mut accumulate = |k: usize, estimate: &Pose| -> Result<(), FilterError> {
            let est = Vector6::from(log(estimate)?);
            abs_sum += (est - truth_coords[k]).abs();
            Ok(())
        };
        match sigma {
            SigmaPsi::Infinite => {
                for (k, s) in sequence.iter().enumerate() {
                    accumulate(k, s.observation.mean())?;
                }
            }
            SigmaPsi::Finite(level) => {
                let noise = default_dynamics_noise(level)?;
                let mut state = FilterState::init(sequence[0].observation, Pose::identity());
                accumulate(0, state.belief().mean())?;
                for k in 1..sequence.len() {
                    let t = synthetic_transition(&sequence[k - 1].truth, &sequence[k].truth, level, rng);
                    state = state.step_with_transition(
                        &sequence[k].observation,
                        &t,
                        &Pose::identity(),
                        &noise,
                    )?;
                    accumulate(k, state.belief().mean())?;
                }
            }
        }
        let mae = abs_sum / sequence.len() as f64;
        table.rows.push(StudyRow {
            sigma_psi: sigma,
            mae: mae.into(),
        });
    }
    Ok(table)
}
