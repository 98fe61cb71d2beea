//! Small statistics toolbox: Wilson intervals, Kolmogorov–Smirnov tests and
//! running moments.

use statrs::distribution::{ContinuousCDF, Normal};

/// Wilson score interval for `successes` out of `trials` at critical value `z`.
/// Returns `(low, high)` clamped to `[0, 1]` and containing the point estimate.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = (center - half).clamp(0.0, 1.0).min(p);
    let high = (center + half).clamp(0.0, 1.0).max(p);
    (low, high)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided critical value for a family of `comparisons` tests at overall
/// level `alpha` (Bonferroni).
pub fn bonferroni_z(alpha: f64, comparisons: usize) -> f64 {
    normal_quantile(1.0 - alpha / (2.0 * comparisons.max(1) as f64))
}

/// Two-proportion z statistic `(p2 - p1) / se` with unpooled variance.
/// Zero when both proportions are degenerate and equal.
pub fn two_proportion_z(s1: u64, n1: u64, s2: u64, n2: u64) -> f64 {
    let (p1, p2) = (s1 as f64 / n1 as f64, s2 as f64 / n2 as f64);
    let var = p1 * (1.0 - p1) / n1 as f64 + p2 * (1.0 - p2) / n2 as f64;
    if var == 0.0 {
        return match p2.partial_cmp(&p1) {
            Some(std::cmp::Ordering::Greater) => f64::INFINITY,
            Some(std::cmp::Ordering::Less) => f64::NEG_INFINITY,
            _ => 0.0,
        };
    }
    (p2 - p1) / var.sqrt()
}

/// Asymptotic Kolmogorov distribution survival function
/// `Q(x) = 2 Σ (-1)^{k-1} exp(-2 k² x²)`.
pub fn kolmogorov_q(x: f64) -> f64 {
    // The series is within 1e-10 of 1 below 0.2 and converges slowly there.
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        sum += if k as u32 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl KsResult {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// One-sample KS test of `samples` against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    let sqrt_n = n.sqrt();
    // Stephens' small-sample correction.
    let p_value = kolmogorov_q((sqrt_n + 0.12 + 0.11 / sqrt_n) * d);
    KsResult { statistic: d, p_value }
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xs[i].min(ys[j]);
        while i < n && xs[i] <= x {
            i += 1;
        }
        while j < m && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let p_value = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    KsResult { statistic: d, p_value }
}

/// Mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Binomial standard error of a proportion.
pub fn proportion_sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wilson_reference_interval() {
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert_abs_diff_eq!(lo, 0.4038, epsilon = 1e-4);
        assert_abs_diff_eq!(hi, 0.5962, epsilon = 1e-4);
    }

    #[test]
    fn wilson_edges() {
        let (lo, hi) = wilson_interval(0, 10, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 1.0);
        let (lo, hi) = wilson_interval(10, 10, 1.96);
        assert_eq!(hi, 1.0);
        assert!(lo < 1.0);
    }

    #[test]
    fn kolmogorov_q_reference() {
        // Q(1.3581) ≈ 0.05 and Q(1.6276) ≈ 0.01
        assert_abs_diff_eq!(kolmogorov_q(1.3581), 0.05, epsilon = 1e-3);
        assert_abs_diff_eq!(kolmogorov_q(1.6276), 0.01, epsilon = 1e-3);
    }

    #[test]
    fn ks_two_sample_identical_and_shifted() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        assert!(ks_two_sample(&a, &a).statistic < 1e-12);
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        let r = ks_two_sample(&a, &b);
        assert_abs_diff_eq!(r.statistic, 0.5, epsilon = 1e-2);
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn ks_one_sample_uniform_grid() {
        let a: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_one_sample(&a, |x| x.clamp(0.0, 1.0));
        assert!(r.statistic <= 0.0005 + 1e-12);
        assert!(r.passes(0.01));
    }

    #[test]
    fn bonferroni_grows_with_family() {
        assert_abs_diff_eq!(bonferroni_z(0.05, 1), 1.959964, epsilon = 1e-5);
        assert!(bonferroni_z(0.0027, 8) > bonferroni_z(0.0027, 1));
        assert_abs_diff_eq!(bonferroni_z(0.0026998, 1), 3.0, epsilon = 1e-3);
    }
}
