//! Numerics of a Gaussian density network head: bounded activations, losses and
//! metrics over 6-component pose labels, and the contact-pose sampler that
//! produces those labels.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use thiserror::Error;

use crate::liegroup::{euler_to_pose, log, LieError, Twist};

/// Number of pose components per label.
pub const POSE_DIM: usize = 6;
/// Loss weights that put rotations (rad) on a footing with translations (mm).
pub const DEFAULT_MSE_WEIGHTS: [f64; 6] = [1.0, 1.0, 1.0, 100.0, 100.0, 100.0];
/// Range enforced on predicted inverse standard deviations.
pub const INV_SIGMA_BOUNDS: SoftboundParams = SoftboundParams {
    x_min: 1e-6,
    x_max: 1e6,
};

pub type Row = [f64; POSE_DIM];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GdnError {
    #[error("label and prediction counts differ ({labels} vs {preds})")]
    ShapeMismatch { labels: usize, preds: usize },
    #[error("no samples")]
    Empty,
    #[error("inverse standard deviation {0} is not positive")]
    NonPositiveInvSigma(f64),
    #[error("softbound upper limit {x_max} is below lower limit {x_min}")]
    InvertedBounds { x_min: f64, x_max: f64 },
    #[error("sample spec range is empty or invalid: {0}")]
    InvalidSpec(&'static str),
    #[error(transparent)]
    Lie(#[from] LieError),
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus_stable(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftboundParams {
    pub x_min: f64,
    pub x_max: f64,
}

impl SoftboundParams {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self, GdnError> {
        if !(x_max >= x_min) {
            return Err(GdnError::InvertedBounds { x_min, x_max });
        }
        Ok(Self { x_min, x_max })
    }
}

/// Smooth clamp of `x` into `[x_min, x_max]`, stable for any finite input.
pub fn softbound(x: f64, p: &SoftboundParams) -> f64 {
    let lower = x.max(p.x_min);
    let upper = x.min(p.x_max);
    // Cancel the large terms against each other first so no bound gets absorbed.
    let base = if x >= p.x_min {
        (lower - x) + upper
    } else {
        lower + (upper - x)
    };
    base + (-(x - p.x_min).abs()).exp().ln_1p() - (-(x - p.x_max).abs()).exp().ln_1p()
}

/// Direct softplus form of [`softbound`]; overflows for large `|x|`.
pub fn softbound_naive(x: f64, p: &SoftboundParams) -> f64 {
    let sp = |v: f64| (1.0 + v.exp()).ln();
    p.x_min + sp(x - p.x_min) - sp(x - p.x_max)
}

fn check_shapes(labels: usize, preds: usize) -> Result<(), GdnError> {
    if labels != preds {
        return Err(GdnError::ShapeMismatch { labels, preds });
    }
    if labels == 0 {
        return Err(GdnError::Empty);
    }
    Ok(())
}

/// `(1/N) sum_i sum_j alpha_j (label_ij - pred_ij)^2`.
pub fn weighted_mse(labels: &[Row], preds: &[Row], alpha: &Row) -> Result<f64, GdnError> {
    check_shapes(labels.len(), preds.len())?;
    let total: f64 = labels
        .iter()
        .zip(preds)
        .map(|(l, p)| (0..POSE_DIM).map(|j| alpha[j] * (l[j] - p[j]).powi(2)).sum::<f64>())
        .sum();
    Ok(total / labels.len() as f64)
}

pub fn mae_per_component(labels: &[Row], preds: &[Row]) -> Result<Row, GdnError> {
    check_shapes(labels.len(), preds.len())?;
    let mut acc = [0.0; POSE_DIM];
    for (l, p) in labels.iter().zip(preds) {
        for j in 0..POSE_DIM {
            acc[j] += (l[j] - p[j]).abs();
        }
    }
    let n = labels.len() as f64;
    Ok(acc.map(|a| a / n))
}

/// Mean and diagonal inverse standard deviations predicted for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeteroPrediction {
    pub mu: Row,
    pub inv_sigma: Row,
}

impl HeteroPrediction {
    /// Builds a prediction with `inv_sigma` passed through the network's softbound.
    pub fn from_raw(mu: Row, raw_inv_sigma: Row) -> Self {
        Self {
            mu,
            inv_sigma: raw_inv_sigma.map(|v| softbound(v, &INV_SIGMA_BOUNDS)),
        }
    }
}

/// Mean negative log-likelihood of labels under diagonal Gaussian predictions.
pub fn mean_nll(labels: &[Row], preds: &[HeteroPrediction]) -> Result<f64, GdnError> {
    check_shapes(labels.len(), preds.len())?;
    let mut total = 0.0;
    for (l, p) in labels.iter().zip(preds) {
        for j in 0..POSE_DIM {
            let s = p.inv_sigma[j];
            if !(s > 0.0) {
                return Err(GdnError::NonPositiveInvSigma(s));
            }
            let z = s * (l[j] - p.mu[j]);
            total += z * z - 2.0 * s.ln();
        }
    }
    Ok(POSE_DIM as f64 / 2.0 * (2.0 * PI).ln() + total / (2.0 * labels.len() as f64))
}

/// Ranges for random contact poses; lengths in mm, angles in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleSpec {
    pub r_max: f64,
    pub z_range: (f64, f64),
    pub phi_max_deg: f64,
    pub gamma_range_deg: (f64, f64),
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            r_max: 5.0,
            z_range: (0.5, 6.0),
            phi_max_deg: 25.0,
            gamma_range_deg: (-5.0, 5.0),
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<(), GdnError> {
        if !(self.r_max > 0.0) {
            return Err(GdnError::InvalidSpec("r_max must be positive"));
        }
        if !(self.z_range.1 > self.z_range.0) {
            return Err(GdnError::InvalidSpec("z range"));
        }
        if !(self.phi_max_deg > 0.0 && self.phi_max_deg < 90.0) {
            return Err(GdnError::InvalidSpec("phi_max must lie in (0, 90) degrees"));
        }
        if !(self.gamma_range_deg.1 > self.gamma_range_deg.0) {
            return Err(GdnError::InvalidSpec("gamma range"));
        }
        Ok(())
    }
}

/// Uniform variates driving one contact-pose draw, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitDraw {
    pub radius: f64,
    pub azimuth: f64,
    pub depth: f64,
    pub tilt: f64,
    pub tilt_azimuth: f64,
    pub spin: f64,
}

impl UnitDraw {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            radius: rng.random(),
            azimuth: rng.random(),
            depth: rng.random(),
            tilt: rng.random(),
            tilt_azimuth: rng.random(),
            spin: rng.random(),
        }
    }
}

/// Maps uniform variates to Euler contact pose `(x, y, z, alpha, beta, gamma)` (mm, rad).
///
/// Shear offsets are uniform over a disk and the sensor axis is uniform over a
/// spherical cap around the surface normal.
pub fn contact_pose_from_unit(spec: &SampleSpec, u: &UnitDraw) -> Row {
    let r = spec.r_max * u.radius.sqrt();
    let theta = TAU * u.azimuth;
    let z = spec.z_range.0 + (spec.z_range.1 - spec.z_range.0) * u.depth;
    let cos_max = spec.phi_max_deg.to_radians().cos();
    let phi = (1.0 - (1.0 - cos_max) * u.tilt).acos();
    let psi = TAU * u.tilt_azimuth;
    let (cx, cy, cz) = (phi.sin() * psi.cos(), phi.sin() * psi.sin(), phi.cos());
    let alpha = -cy.asin();
    let beta = -cx.atan2(cz);
    let (g0, g1) = spec.gamma_range_deg;
    let gamma = (g0 + (g1 - g0) * u.spin).to_radians();
    [r * theta.cos(), r * theta.sin(), z, alpha, beta, gamma]
}

pub fn sample_contact_pose<R: Rng + ?Sized>(spec: &SampleSpec, rng: &mut R) -> Row {
    contact_pose_from_unit(spec, &UnitDraw::random(rng))
}

/// Training label for a contact pose: exponential coordinates of the surface in the sensor frame.
pub fn label_pipeline(euler: &Row) -> Result<Twist, GdnError> {
    let feature_to_sensor = euler_to_pose(euler);
    Ok(log(&feature_to_sensor.inverse())?)
}
