//! Goodness-of-fit tests used to validate samplers against exact laws.

use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test of `sample` against the CDF `cdf`,
/// with the asymptotic Kolmogorov law for the p-value.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> TestResult {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    TestResult {
        statistic: d,
        p_value: kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d),
    }
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson χ² test of observed counts against cell probabilities.
/// Cells with zero probability must be empty and are dropped.
pub fn chi_square_test(observed: &[u64], probs: &[f64]) -> TestResult {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        if p <= 0.0 {
            if o > 0 {
                return TestResult { statistic: f64::INFINITY, p_value: 0.0 };
            }
            continue;
        }
        let e = n as f64 * p;
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    TestResult {
        statistic: stat,
        p_value: chi_square_sf(stat, (cells - 1) as f64),
    }
}

/// χ² test that counts are uniform over their cells.
pub fn uniformity_test(counts: &[u64]) -> TestResult {
    let p = vec![1.0 / counts.len() as f64; counts.len()];
    chi_square_test(counts, &p)
}

pub fn chi_square_sf(stat: f64, dof: f64) -> f64 {
    ChiSquared::new(dof).expect("positive degrees of freedom").sf(stat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn kolmogorov_reference_values() {
        // tabulated critical values of the limiting law
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 2e-4);
    }

    #[test]
    fn ks_accepts_right_law_and_rejects_wrong_one() {
        let mut rng = seeded(11, 0);
        let u: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_test(&u, |x| x.clamp(0.0, 1.0)).p_value > 0.01);
        assert!(ks_test(&u, |x| x.clamp(0.0, 1.0).powf(1.05)).p_value < 0.01);
    }

    #[test]
    fn chi_square_matches_hand_value() {
        let r = chi_square_test(&[10, 20, 30], &[1.0 / 6.0, 1.0 / 3.0, 0.5]);
        assert!(r.statistic.abs() < 1e-12 && (r.p_value - 1.0).abs() < 1e-12);
        let r = uniformity_test(&[5, 15]);
        assert!((r.statistic - 5.0).abs() < 1e-12);
        assert!((r.p_value - 0.025_347_3).abs() < 1e-6);
    }
}
