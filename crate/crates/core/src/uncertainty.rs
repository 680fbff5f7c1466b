//! Concentrated Gaussians on SE(3) and the Euclidean Gaussian identities behind them.
//!
//! A [`PoseGaussian`] describes `X = exp(eps^) * mean` with `eps ~ N(0, cov)`, a left
//! perturbation expressed in the global tangent space.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::{Cholesky, Const, Matrix6, SMatrix, SVector, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::liegroup::{
    adjoint, exp, inv_left_jacobian, inv_left_jacobian_exact, left_jacobian_det,
    left_jacobian_exact, log, LieError, Pose, Twist,
};

/// Covariances with a larger eigenvalue are outside the regime where fusion is reliable.
pub const CONCENTRATION_LIMIT: f64 = 1.0;
/// Iterations of [`fuse`] used when callers do not ask for a different count.
pub const DEFAULT_FUSE_ITERATIONS: usize = 5;

static WARNED_CONCENTRATION: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncertaintyError {
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("covariance is not symmetric positive definite: {0}")]
    NotPositiveDefinite(&'static str),
    #[error("combined precision of the fused terms is not positive definite")]
    DegenerateFusion,
    #[error("covariance has non-finite entries")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, UncertaintyError>;

pub(crate) fn symmetrize<const D: usize>(m: &SMatrix<f64, D, D>) -> SMatrix<f64, D, D> {
    (m + m.transpose()) * 0.5
}

fn cholesky<const D: usize>(
    m: &SMatrix<f64, D, D>,
    what: &'static str,
) -> Result<Cholesky<f64, Const<D>>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(UncertaintyError::NonFinite);
    }
    Cholesky::new(*m).ok_or(UncertaintyError::NotPositiveDefinite(what))
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn spd_inverse<const D: usize>(m: &SMatrix<f64, D, D>) -> Result<SMatrix<f64, D, D>> {
    Ok(symmetrize(&cholesky(&symmetrize(m), "inversion")?.inverse()))
}

/// Largest eigenvalue of a symmetric 6x6 matrix.
pub fn max_eigenvalue(m: &Matrix6<f64>) -> f64 {
    m.symmetric_eigenvalues().max()
}

/// Gaussian on SE(3) with a left perturbation in the global tangent space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseGaussian {
    mean: Pose,
    cov: Matrix6<f64>,
}

impl PoseGaussian {
    /// Symmetrizes `cov` and checks that it is positive definite.
    pub fn new(mean: Pose, cov: Matrix6<f64>) -> Result<Self> {
        let cov = symmetrize(&cov);
        cholesky(&cov, "pose covariance")?;
        Ok(Self { mean, cov })
    }

    pub fn mean(&self) -> &Pose {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix6<f64> {
        &self.cov
    }

    pub fn cov_trace(&self) -> f64 {
        self.cov.trace()
    }

    /// Density `beta(eps) exp(-eps' cov^-1 eps / 2)` with `eps = log(x mean^-1)`.
    pub fn density(&self, x: &Pose) -> Result<f64> {
        let eps = log(&(x * &self.mean.inverse()))?;
        let chol = cholesky(&self.cov, "density covariance")?;
        let det: f64 = chol.l().diagonal().iter().map(|d| d * d).product();
        let eta = 1.0 / ((2.0 * PI).powi(6) * det).sqrt();
        let beta = eta / left_jacobian_det(&eps).abs();
        let v = *eps.as_vector();
        let mahalanobis = v.dot(&chol.solve(&v));
        Ok(beta * (-0.5 * mahalanobis).exp())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Pose> {
        let chol = cholesky(&self.cov, "sampling covariance")?;
        let z = Vector6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(exp(&Twist::from_vector(chol.l() * z)) * self.mean)
    }

    /// Mean and covariance expressed in the exponential coordinates of the mean.
    pub fn to_global_tangent(&self) -> Result<EuclideanGaussian<6>> {
        let mu = log(&self.mean)?;
        let jinv = inv_left_jacobian_exact(&mu);
        Ok(EuclideanGaussian {
            mean: *mu.as_vector(),
            cov: symmetrize(&(jinv * self.cov * jinv.transpose())),
        })
    }

    /// Inverse of [`PoseGaussian::to_global_tangent`].
    pub fn from_global_tangent(eg: &EuclideanGaussian<6>) -> Result<Self> {
        let mu = Twist::from_vector(eg.mean);
        let j = left_jacobian_exact(&mu);
        Self::new(exp(&mu), j * eg.cov * j.transpose())
    }

    /// Pushes the distribution through `x -> exp(noise) t x`.
    ///
    /// `noise_cov` must be positive semi-definite.
    pub fn transform(&self, t: &Pose, noise_cov: &Matrix6<f64>) -> Self {
        let a = adjoint(t);
        Self {
            mean: t * &self.mean,
            cov: symmetrize(&(a * self.cov * a.transpose() + noise_cov)),
        }
    }

    pub fn max_eigenvalue(&self) -> f64 {
        max_eigenvalue(&self.cov)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FuseOptions {
    pub iterations: usize,
    /// Stop once the update step norm drops below this value.
    pub tolerance: Option<f64>,
}

impl Default for FuseOptions {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_FUSE_ITERATIONS,
            tolerance: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuseReport {
    pub fused: PoseGaussian,
    /// Norm of the update twist at each iteration that ran.
    pub step_norms: Vec<f64>,
}

impl FuseReport {
    pub fn iterations(&self) -> usize {
        self.step_norms.len()
    }
}

/// Normalized product of two concentrated Gaussians, with a fixed iteration count.
pub fn fuse(a: &PoseGaussian, b: &PoseGaussian, iterations: usize) -> Result<PoseGaussian> {
    let opts = FuseOptions {
        iterations,
        tolerance: None,
    };
    Ok(fuse_with(a, b, &opts)?.fused)
}

/// Iterative fusion around an operating point that starts at `a.mean`.
///
/// Each iteration linearizes both densities at the operating point with a
/// second-order inverse Jacobian, solves the Gaussian product in the tangent
/// space and moves the operating point by the product mean.
pub fn fuse_with(a: &PoseGaussian, b: &PoseGaussian, opts: &FuseOptions) -> Result<FuseReport> {
    for g in [a, b] {
        let lambda = g.max_eigenvalue();
        // Once per process: a filter with loose dynamics noise would warn every step.
        if lambda > CONCENTRATION_LIMIT && !WARNED_CONCENTRATION.swap(true, Ordering::Relaxed) {
            log::warn!("fusing a covariance with eigenvalue {lambda:.3} > {CONCENTRATION_LIMIT}; further warnings suppressed");
        }
    }
    let prec_a = spd_inverse(&a.cov)?;
    let prec_b = spd_inverse(&b.cov)?;
    let inv_a = a.mean.inverse();
    let inv_b = b.mean.inverse();

    let mut op = a.mean;
    let mut cov = a.cov;
    let mut step_norms = Vec::with_capacity(opts.iterations);
    for _ in 0..opts.iterations {
        let xi_a = log(&(op * inv_a))?;
        let xi_b = log(&(op * inv_b))?;
        let ja = inv_left_jacobian(&xi_a);
        let jb = inv_left_jacobian(&xi_b);
        let wa = ja.transpose() * prec_a;
        let wb = jb.transpose() * prec_b;
        cov = spd_inverse(&(wa * ja + wb * jb))?;
        let mu = -(cov * (wa * xi_a.as_vector() + wb * xi_b.as_vector()));
        op = exp(&Twist::from_vector(mu)) * op;
        let norm = mu.norm();
        step_norms.push(norm);
        if opts.tolerance.is_some_and(|tol| norm < tol) {
            break;
        }
    }
    Ok(FuseReport {
        fused: PoseGaussian {
            mean: op,
            cov,
        },
        step_norms,
    })
}

/// Gaussian on `R^D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EuclideanGaussian<const D: usize> {
    pub mean: SVector<f64, D>,
    pub cov: SMatrix<f64, D, D>,
}

impl<const D: usize> EuclideanGaussian<D> {
    pub fn new(mean: SVector<f64, D>, cov: SMatrix<f64, D, D>) -> Self {
        Self {
            mean,
            cov: symmetrize(&cov),
        }
    }
}

/// Normalized product of two Gaussian densities.
pub fn gaussian_product<const D: usize>(
    a: &EuclideanGaussian<D>,
    b: &EuclideanGaussian<D>,
) -> Result<EuclideanGaussian<D>> {
    let pa = spd_inverse(&a.cov)?;
    let pb = spd_inverse(&b.cov)?;
    let cov = spd_inverse(&(pa + pb))?;
    Ok(EuclideanGaussian {
        mean: cov * (pa * a.mean + pb * b.mean),
        cov,
    })
}

/// Fusion of two posteriors that share `prior`, removing the double-counted prior.
pub fn gaussian_fusion_with_prior<const D: usize>(
    a: &EuclideanGaussian<D>,
    b: &EuclideanGaussian<D>,
    prior: &EuclideanGaussian<D>,
) -> Result<EuclideanGaussian<D>> {
    let pa = spd_inverse(&a.cov)?;
    let pb = spd_inverse(&b.cov)?;
    let px = spd_inverse(&prior.cov)?;
    let precision = symmetrize(&(pa + pb - px));
    let cov = spd_inverse(&precision).map_err(|_| UncertaintyError::DegenerateFusion)?;
    Ok(EuclideanGaussian {
        mean: cov * (pa * a.mean + pb * b.mean - px * prior.mean),
        cov,
    })
}

/// Distribution of `y = A x + z` for independent Gaussians `x` and `z`.
pub fn linear_gaussian_transform<const D: usize>(
    a: &SMatrix<f64, D, D>,
    x: &EuclideanGaussian<D>,
    z: &EuclideanGaussian<D>,
) -> EuclideanGaussian<D> {
    EuclideanGaussian {
        mean: a * x.mean + z.mean,
        cov: symmetrize(&(a * x.cov * a.transpose() + z.cov)),
    }
}
