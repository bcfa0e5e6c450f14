//! Deterministic ensemble statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Pairwise summation in index order, so the result does not depend on how
/// the values were produced.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn mean(v: &[f64]) -> f64 {
    pairwise_sum(v) / v.len() as f64
}

/// Unbiased sample variance (zero for fewer than two samples).
pub fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mu = mean(v);
    let dev: Vec<f64> = v.iter().map(|x| (x - mu) * (x - mu)).collect();
    pairwise_sum(&dev) / (v.len() - 1) as f64
}

pub fn estimate(v: &[f64]) -> Estimate {
    if v.is_empty() {
        return Estimate {
            mean: f64::NAN,
            std_error: f64::NAN,
        };
    }
    let mu = mean(v);
    // Constant samples get an exact zero error rather than round-off.
    let se = if v.iter().all(|x| *x == v[0]) {
        0.0
    } else {
        (variance(v) / v.len() as f64).sqrt()
    };
    Estimate {
        mean: mu,
        std_error: se,
    }
}

/// Two-sided Welch confidence interval for `mean(a) - mean(b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchInterval {
    pub difference: f64,
    pub lower: f64,
    pub upper: f64,
    pub dof: f64,
}

pub fn welch_interval(a: Estimate, n_a: usize, b: Estimate, n_b: usize, level: f64) -> WelchInterval {
    let va = a.std_error * a.std_error;
    let vb = b.std_error * b.std_error;
    let diff = a.mean - b.mean;
    let se = (va + vb).sqrt();
    if se == 0.0 {
        return WelchInterval {
            difference: diff,
            lower: diff,
            upper: diff,
            dof: f64::INFINITY,
        };
    }
    let num = (va + vb).powi(2);
    let den = va * va / (n_a.max(2) - 1) as f64 + vb * vb / (n_b.max(2) - 1) as f64;
    let dof = num / den;
    let q = 0.5 + level / 2.0;
    let t = StudentsT::new(0.0, 1.0, dof)
        .map(|d| d.inverse_cdf(q))
        .unwrap_or(f64::INFINITY);
    WelchInterval {
        difference: diff,
        lower: diff - t * se,
        upper: diff + t * se,
        dof,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constant_is_exact() {
        let e = estimate(&[2.5; 100]);
        assert_eq!(e.mean, 2.5);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn sample_variance() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert!((variance(&v) - 5.0 / 3.0).abs() < 1e-15);
        let e = estimate(&v);
        assert!((e.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn welch_large_sample_matches_normal_quantile() {
        let a = Estimate { mean: 1.0, std_error: 0.03 };
        let b = Estimate { mean: 0.0, std_error: 0.04 };
        let w = welch_interval(a, 100_000, b, 100_000, 0.99);
        // z_{0.995} = 2.5758
        assert!((w.upper - 1.0 - 2.5758 * 0.05).abs() < 1e-3);
        assert!(w.lower < 1.0 && w.upper > 1.0);
    }
}
