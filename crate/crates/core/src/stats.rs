//! Small statistical helpers shared by the samplers and estimators.

/// Arithmetic mean; NaN for an empty slice.
pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Standard error of the mean of a correlated series by non-overlapping
/// batch means (20 batches, fewer for short series).
pub fn batch_stderr(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let batches = 20.min(n / 2).max(2);
    let size = n / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&x[b * size..(b + 1) * size])).collect();
    (variance(&means) / batches as f64).sqrt()
}

/// `log(mean(exp(v)))`, computed stably.
pub fn log_mean_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = v.iter().map(|x| (x - m).exp()).sum();
    m + (s / v.len() as f64).ln()
}

/// Kish effective sample size of the weights `exp(logw)`.
pub fn effective_sample_size(logw: &[f64]) -> f64 {
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (s1, s2) = logw.iter().fold((0.0, 0.0), |(a, b), &l| {
        let w = (l - m).exp();
        (a + w, b + w * w)
    });
    s1 * s1 / s2
}

/// Least-squares line `y = a + b x`.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(LinearFit { intercept, slope, r_squared, residuals })
}

/// Deterministic child seed (splitmix64 finaliser over the parent seed and
/// the tags).
pub fn child_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut z = seed;
    for &t in tags {
        z = splitmix(z ^ splitmix(t.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    splitmix(z)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_mean_exp_is_stable() {
        assert!((log_mean_exp(&[1000.0, 1000.0]) - 1000.0).abs() < 1e-12);
        let v = [0.1, -0.3, 0.7];
        let naive = (v.iter().map(|x: &f64| x.exp()).sum::<f64>() / 3.0).ln();
        assert!((log_mean_exp(&v) - naive).abs() < 1e-15);
    }

    #[test]
    fn fit_recovers_a_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.intercept - 2.0).abs() < 1e-14 && (f.slope + 0.5).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ess_of_equal_weights_is_the_count() {
        assert!((effective_sample_size(&[0.3; 10]) - 10.0).abs() < 1e-12);
        assert!(effective_sample_size(&[0.0, -1e3]) < 1.0 + 1e-12);
    }

    #[test]
    fn child_seeds_differ() {
        assert_ne!(child_seed(1, &[0]), child_seed(1, &[1]));
        assert_ne!(child_seed(1, &[0]), child_seed(2, &[0]));
        assert_eq!(child_seed(5, &[3, 4]), child_seed(5, &[3, 4]));
    }
}
