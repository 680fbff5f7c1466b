#![allow(dead_code)]

use nalgebra::{Matrix6, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;

use tactile_core::liegroup::{exp, log, Pose, Twist};
use tactile_core::uncertainty::PoseGaussian;

/// Negative log of the unnormalized product density, in the left-perturbation chart.
pub fn product_cost(x: &Pose, a: &PoseGaussian, pa: &Matrix6<f64>, b: &PoseGaussian, pb: &Matrix6<f64>) -> f64 {
    let ea = log(&(x * &a.mean().inverse())).unwrap();
    let eb = log(&(x * &b.mean().inverse())).unwrap();
    0.5 * (ea.as_vector().dot(&(pa * ea.as_vector())) + eb.as_vector().dot(&(pb * eb.as_vector())))
}

/// Mode of the product of two concentrated Gaussians by derivative-free
/// coordinate descent: each coordinate gets a three-point parabolic step.
pub fn product_mode(a: &PoseGaussian, b: &PoseGaussian) -> Pose {
    let pa = a.cov().try_inverse().unwrap();
    let pb = b.cov().try_inverse().unwrap();
    let base = *a.mean();
    let f = |d: &Vector6<f64>| product_cost(&(exp(&Twist::from_vector(*d)) * base), a, &pa, b, &pb);
    let mut d = Vector6::zeros();
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for i in 0..6 {
            let h = 1e-4;
            let mut e = Vector6::zeros();
            e[i] = h;
            let (fm, f0, fp) = (f(&(d - e)), f(&d), f(&(d + e)));
            let curv = fp - 2.0 * f0 + fm;
            if curv <= 0.0 {
                continue;
            }
            let step = -h * (fp - fm) / (2.0 * curv);
            d[i] += step;
            moved = moved.max(step.abs());
        }
        if moved < 1e-13 {
            break;
        }
    }
    exp(&Twist::from_vector(d)) * base
}

/// Random SPD covariance with eigenvalues in `[lo, hi]`.
pub fn random_cov<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Matrix6<f64> {
    let m = Matrix6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let q = m.qr().q();
    let eig = Vector6::from_fn(|_, _| lo + (hi - lo) * rng.random::<f64>());
    q * Matrix6::from_diagonal(&eig) * q.transpose()
}

pub fn random_twist<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Twist {
    Twist::from_vector(Vector6::from_fn(|_, _| scale * rng.sample::<f64, _>(StandardNormal)))
}

/// Two concentrated Gaussians whose means differ by a small twist.
pub fn concentrated_pair<R: Rng + ?Sized>(rng: &mut R) -> (PoseGaussian, PoseGaussian) {
    let mean_a = exp(&random_twist(rng, 0.5));
    let mean_b = exp(&random_twist(rng, 0.1)) * mean_a;
    let a = PoseGaussian::new(mean_a, random_cov(rng, 0.005, 0.05)).unwrap();
    let b = PoseGaussian::new(mean_b, random_cov(rng, 0.005, 0.05)).unwrap();
    (a, b)
}

pub fn pose_distance(a: &Pose, b: &Pose) -> f64 {
    log(&(a * &b.inverse())).unwrap().norm()
}
