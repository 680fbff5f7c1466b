use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use tactile_core::gdnmath::*;

// ln(1 + e^x) evaluated with mpmath at 40 significant digits.
const SOFTPLUS_REFERENCE: [(f64, f64); 11] = [
    (-40.0, 4.2483542552915889863e-18),
    (-20.0, 2.0611536203143807032e-9),
    (-5.0, 0.0067153484891180686164),
    (-1.0, 0.31326168751822283405),
    (-0.001, 0.69264730555994010107),
    (0.0, 0.69314718055994530942),
    (0.001, 0.69364730555994010109),
    (1.0, 1.313261687518222834),
    (5.0, 5.0067153484891180686),
    (20.0, 20.00000000206115362),
    (40.0, 40.000000000000000004),
];

#[test]
fn softplus_matches_high_precision_values() {
    for (x, expected) in SOFTPLUS_REFERENCE {
        let got = softplus_stable(x);
        assert!((got - expected).abs() <= 4.0 * f64::EPSILON * expected, "softplus({x}) = {got}, want {expected}");
    }
}

#[test]
fn softbound_agrees_with_naive_form_where_that_is_finite() {
    let p = SoftboundParams::new(-2.0, 3.0).unwrap();
    for i in -300..=300 {
        let x = i as f64 * 0.1;
        let a = softbound(x, &p);
        let b = softbound_naive(x, &p);
        assert!((a - b).abs() < 1e-12, "x = {x}: {a} vs {b}");
    }
}

#[test]
fn softbound_survives_extreme_inputs() {
    let p = INV_SIGMA_BOUNDS;
    let xs = [-f64::MAX, -1e308, -1e-308, 0.0, 1e-308, 1e308, f64::MAX];
    let ys: Vec<f64> = xs.iter().map(|&x| softbound(x, &p)).collect();
    for (x, y) in xs.iter().zip(&ys) {
        assert!(y.is_finite(), "softbound({x}) = {y}");
        assert!(*y >= p.x_min && *y <= p.x_max);
    }
    assert!(ys.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(ys[0], p.x_min);
    assert_eq!(ys[6], p.x_max);
    // The naive form overflows where the stable one does not.
    assert!(!softbound_naive(1e308, &p).is_finite());
}

#[test]
fn nll_is_stationary_at_the_inverse_absolute_error() {
    let label: [Row; 1] = [[1.0, -2.0, 0.5, 0.01, -0.02, 0.03]];
    let mu: Row = [0.7, -1.6, 0.9, 0.015, -0.01, 0.0];
    for j in 0..POSE_DIM {
        let e = (label[0][j] - mu[j]).abs();
        let s0 = 1.0 / e;
        let nll_at = |s: f64| {
            let mut inv = [1.0; POSE_DIM];
            inv[j] = s;
            mean_nll(&label, &[HeteroPrediction { mu, inv_sigma: inv }]).unwrap()
        };
        let h = 1e-4 * s0;
        let grad = (nll_at(s0 + h) - nll_at(s0 - h)) / (2.0 * h);
        // Scale of the two terms that cancel at the stationary point.
        let scale = 1.0 / s0;
        assert!(grad.abs() / scale < 1e-4, "component {j}: derivative {grad}");
        assert!(nll_at(s0) < nll_at(0.9 * s0) && nll_at(s0) < nll_at(1.1 * s0));
    }
}

#[test]
fn losses_stay_finite_on_extreme_valid_inputs() {
    let labels = [[1e150, -1e150, 1e-300, 0.0, 1e100, -1e-100]];
    let preds = [[-1e150, 1e150, 0.0, 1e-300, 1e100, 1e-100]];
    let mse = weighted_mse(&labels, &preds, &DEFAULT_MSE_WEIGHTS).unwrap();
    assert!(mse.is_finite());
    // Inverse sigmas at both saturation limits, residuals the limits can represent.
    let mu = [1e3 + 1e-3, -1e3, 0.0, 1e-300, 1.0, 1e5];
    let hetero = [HeteroPrediction::from_raw(mu, [1e308, -1e308, 0.0, 1e-308, 50.0, -1e308])];
    let small = [[1e3, -1e3, 1e-300, 0.0, 1.0, -1e5]];
    let nll = mean_nll(&small, &hetero).unwrap();
    assert!(nll.is_finite(), "{nll}");
}

#[test]
fn contact_samples_are_uniform_over_the_disk() {
    // Squared radius over r_max^2 is uniform on [0, 1] for a uniform disk.
    let spec = SampleSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let bins = 20;
    let n = 20_000;
    let mut counts = vec![0usize; bins];
    for _ in 0..n {
        let e = sample_contact_pose(&spec, &mut rng);
        let u = (e[0] * e[0] + e[1] * e[1]) / (spec.r_max * spec.r_max);
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = n as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi-square {stat}, p = {p}");
}

#[test]
fn tilt_cosine_is_uniform_over_the_cap() {
    let spec = SampleSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cos_max = spec.phi_max_deg.to_radians().cos();
    let bins = 20;
    let n = 20_000;
    let mut counts = vec![0usize; bins];
    for _ in 0..n {
        let e = sample_contact_pose(&spec, &mut rng);
        // Sensor axis z in the surface frame is R * e_z; its z component is cos(tilt).
        let cos_tilt = e[3].cos() * e[4].cos();
        let u = (1.0 - cos_tilt) / (1.0 - cos_max);
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = n as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi-square {stat}, p = {p}");
}

proptest! {
    #[test]
    fn softbound_is_monotone_and_bounded(a in -1e3f64..1e3, b in -1e3f64..1e3, lo in -10.0f64..10.0, width in 0.0f64..20.0) {
        let p = SoftboundParams::new(lo, lo + width).unwrap();
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        let fx = softbound(x, &p);
        let fy = softbound(y, &p);
        prop_assert!(fx <= fy);
        prop_assert!(fx >= p.x_min && fy <= p.x_max);
    }

    #[test]
    fn softplus_exceeds_relu(x in -700.0f64..700.0) {
        let s = softplus_stable(x);
        prop_assert!(s >= x.max(0.0));
        prop_assert!(s - x.max(0.0) <= std::f64::consts::LN_2 + 1e-15);
    }

    #[test]
    fn samples_respect_the_ranges(seed in any::<u64>()) {
        let spec = SampleSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = sample_contact_pose(&spec, &mut rng);
        prop_assert!(e[0].hypot(e[1]) <= spec.r_max + 1e-12);
        prop_assert!(e[2] >= spec.z_range.0 && e[2] <= spec.z_range.1);
        let tilt = (e[3].cos() * e[4].cos()).acos().to_degrees();
        prop_assert!(tilt <= spec.phi_max_deg + 1e-9);
        let g = e[5].to_degrees();
        prop_assert!(g >= spec.gamma_range_deg.0 - 1e-12 && g <= spec.gamma_range_deg.1 + 1e-12);
    }
}
