//! Synthetic stand-in for a pose-estimating network: noisy exponential
//! coordinates with a calibrated covariance.

use nalgebra::{Matrix6, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;

use super::SimError;
use crate::liegroup::{exp, left_jacobian_exact, log, Pose, Twist};
use crate::uncertainty::PoseGaussian;

/// Per-component mean absolute errors of a trained estimator (mm, rad).
pub const REFERENCE_MAE: [f64; 6] = [0.4259, 0.4224, 0.1230, 0.0087, 0.0111, 0.0203];

/// Standard deviations whose half-normal mean equals [`REFERENCE_MAE`].
pub fn reference_stds() -> [f64; 6] {
    let k = (std::f64::consts::PI / 2.0).sqrt();
    REFERENCE_MAE.map(|m| m * k)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationModel {
    pub std: [f64; 6],
    /// Scale applied to the reported covariance; 1 means calibrated.
    pub cov_multiplier: f64,
}

impl Default for ObservationModel {
    fn default() -> Self {
        Self {
            std: reference_stds(),
            cov_multiplier: 1.0,
        }
    }
}

impl ObservationModel {
    pub fn new(std: [f64; 6], cov_multiplier: f64) -> Result<Self, SimError> {
        let m = Self { std, cov_multiplier };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(SimError::InvalidScenario(format!("observation stds must be positive, got {:?}", self.std)));
        }
        if !(self.cov_multiplier > 0.0 && self.cov_multiplier.is_finite()) {
            return Err(SimError::InvalidScenario(format!(
                "covariance multiplier must be positive, got {}",
                self.cov_multiplier
            )));
        }
        Ok(())
    }

    /// Noise covariance in exponential coordinates.
    pub fn tangent_cov(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&Vector6::from_fn(|i, _| self.std[i] * self.std[i]))
    }

    /// Observation of the surface-in-sensor pose given the true sensor-in-feature pose.
    ///
    /// Noise is added to the exponential coordinates of the surface pose; the
    /// reported covariance maps that noise into a left perturbation of the mean.
    pub fn observe<R: Rng + ?Sized>(&self, sensor_in_feature: &Pose, rng: &mut R) -> Result<PoseGaussian, SimError> {
        let truth = log(&sensor_in_feature.inverse())?;
        let noise = Vector6::from_fn(|i, _| self.std[i] * rng.sample::<f64, _>(StandardNormal));
        let xi = truth + Twist::from_vector(noise);
        Ok(self.report(&xi)?)
    }

    /// Gaussian reported for estimated exponential coordinates `xi`.
    pub fn report(&self, xi: &Twist) -> Result<PoseGaussian, SimError> {
        let j = left_jacobian_exact(xi);
        let cov = j * self.tangent_cov() * j.transpose() * self.cov_multiplier;
        Ok(PoseGaussian::new(exp(xi), cov)?)
    }
}
