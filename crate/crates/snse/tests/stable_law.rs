//! Distributional checks of the stable sampler.

use snse::stable_noise::{sample_stable, StableParams};
use statrs::distribution::{ContinuousCDF, Normal};

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

#[test]
fn gaussian_case_has_unit_scale_variance() {
    for sigma in [0.5, 1.0, 3.0] {
        let xs = sample_stable(&StableParams::symmetric(2.0, sigma), 200_000, 4).unwrap();
        assert!((variance(&xs) / (sigma * sigma) - 1.0).abs() < 0.02);
    }
}

#[test]
fn gaussian_case_passes_kolmogorov_smirnov_against_unit_scale() {
    let mut xs = sample_stable(&StableParams::symmetric(2.0, 1.0), 20_000, 5).unwrap();
    xs.sort_by(f64::total_cmp);
    let law = Normal::new(0.0, 1.0).unwrap();
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(d * n.sqrt() < 1.63, "KS statistic {d}");
}

/// The stated Gaussian case `N(0, 2σ²)` contradicts the characteristic
/// function `exp(-σ^β|θ|^β/2)` used everywhere else, which gives `N(0, σ²)`.
#[test]
#[ignore = "conflicts with the characteristic-function convention; the sampler has variance sigma^2 at beta = 2"]
fn gaussian_case_has_variance_two_sigma_squared() {
    let xs = sample_stable(&StableParams::symmetric(2.0, 1.0), 1_000_000, 11).unwrap();
    assert!((variance(&xs) / 2.0 - 1.0).abs() <= 0.02, "variance {}", variance(&xs));
}
