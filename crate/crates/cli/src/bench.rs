//! Fusion benchmark on random concentrated pairs.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use tactile_core::liegroup::{exp, Twist};
use tactile_core::uncertainty::{fuse_with, FuseOptions, PoseGaussian};

use crate::Failure;

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub seed: u64,
    pub pairs: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Iterations needed to reach the tolerance -> number of pairs.
    pub histogram: BTreeMap<usize, usize>,
    pub unconverged: usize,
    pub mean_iterations: f64,
    pub mean_time_us: f64,
    pub median_time_us: f64,
}

fn random_twist<R: Rng>(rng: &mut R, scale: f64) -> Twist {
    Twist::from_vector(Vector6::from_fn(|_, _| scale * rng.sample::<f64, _>(StandardNormal)))
}

/// SPD matrix with a random orthonormal eigenbasis and eigenvalues in `[lo, hi]`.
fn random_cov<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Matrix6<f64> {
    let g = Matrix6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let d = Vector6::from_fn(|_, _| rng.random_range(lo..hi));
    q * Matrix6::from_diagonal(&d) * q.transpose()
}

fn random_pair<R: Rng>(rng: &mut R) -> Result<(PoseGaussian, PoseGaussian), Failure> {
    let mean_a = exp(&random_twist(rng, 0.5));
    let mean_b = exp(&random_twist(rng, 0.1)) * mean_a;
    let err = |e: tactile_core::uncertainty::UncertaintyError| Failure::Other(e.to_string());
    let a = PoseGaussian::new(mean_a, random_cov(rng, 0.005, 0.05)).map_err(err)?;
    let b = PoseGaussian::new(mean_b, random_cov(rng, 0.005, 0.05)).map_err(err)?;
    Ok((a, b))
}

pub fn fusion_bench(seed: u64, pairs: usize, max_iterations: usize, tolerance: f64) -> Result<BenchReport, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = FuseOptions {
        iterations: max_iterations,
        tolerance: Some(tolerance),
    };
    let mut histogram = BTreeMap::new();
    let mut unconverged = 0;
    let mut total_iterations = 0;
    let mut times = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let (a, b) = random_pair(&mut rng)?;
        let start = Instant::now();
        let report = fuse_with(&a, &b, &opts).map_err(|e| Failure::Divergence(e.to_string()))?;
        times.push(start.elapsed().as_secs_f64() * 1e6);
        total_iterations += report.iterations();
        if report.step_norms.last().is_some_and(|n| *n < tolerance) {
            *histogram.entry(report.iterations()).or_insert(0) += 1;
        } else {
            unconverged += 1;
        }
    }
    times.sort_by(f64::total_cmp);
    Ok(BenchReport {
        seed,
        pairs,
        tolerance,
        max_iterations,
        histogram,
        unconverged,
        mean_iterations: total_iterations as f64 / pairs as f64,
        mean_time_us: times.iter().sum::<f64>() / pairs as f64,
        median_time_us: times[pairs / 2],
    })
}

pub fn render(r: &BenchReport) -> String {
    let mut out = format!("fusion of {} pairs, tolerance {:e}\n", r.pairs, r.tolerance);
    for (iters, count) in &r.histogram {
        out += &format!("  {iters:>3} iterations: {count}\n");
    }
    if r.unconverged > 0 {
        out += &format!("  not converged within {}: {}\n", r.max_iterations, r.unconverged);
    }
    out += &format!(
        "mean {:.2} iterations, {:.2} us per fusion (median {:.2} us)\n",
        r.mean_iterations, r.mean_time_us, r.median_time_us
    );
    out
}
