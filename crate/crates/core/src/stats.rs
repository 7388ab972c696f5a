//! Small statistical helpers used by the attack experiments.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper-tail probability of a chi-square variate with `dof` degrees of freedom.
pub fn chi_square_sf(statistic: f64, dof: f64) -> f64 {
    if dof <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof).expect("positive degrees of freedom");
    dist.sf(statistic.max(0.0))
}

/// Pearson goodness-of-fit against the uniform distribution. Returns (statistic, p).
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    if counts.len() < 2 || total == 0 {
        return (0.0, 1.0);
    }
    let expected = total as f64 / counts.len() as f64;
    let stat = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    (stat, chi_square_sf(stat, (counts.len() - 1) as f64))
}

/// Chi-square test of homogeneity for two histograms over the same bins.
/// Bins empty in both samples are dropped. Returns (statistic, p).
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len(), "histograms must share bins");
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return (0.0, 1.0);
    }
    let n = (na + nb) as f64;
    let mut stat = 0.0;
    let mut bins = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        bins += 1;
        let ea = col * na as f64 / n;
        let eb = col * nb as f64 / n;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    (stat, chi_square_sf(stat, bins.saturating_sub(1) as f64))
}

/// Plug-in mutual information (nats) of paired discrete samples.
pub fn plugin_mutual_information(xs: &[usize], ys: &[usize], x_bins: usize, y_bins: usize) -> f64 {
    assert_eq!(xs.len(), ys.len());
    if xs.is_empty() {
        return 0.0;
    }
    let mut joint = vec![0u64; x_bins * y_bins];
    let mut px = vec![0u64; x_bins];
    let mut py = vec![0u64; y_bins];
    for (&x, &y) in xs.iter().zip(ys) {
        joint[x * y_bins + y] += 1;
        px[x] += 1;
        py[y] += 1;
    }
    let n = xs.len() as f64;
    let mut mi = 0.0;
    for x in 0..x_bins {
        for y in 0..y_bins {
            let c = joint[x * y_bins + y];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / n;
            mi += pxy * (pxy * n * n / (px[x] as f64 * py[y] as f64)).ln();
        }
    }
    mi.max(0.0)
}

/// Standard deviation of the sample mean of `trials` Bernoulli(p) draws.
pub fn binomial_sigma(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials.max(1) as f64).sqrt()
}

/// Empirical quantile (nearest-rank) of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_tail_values() {
        // chi2(1) upper tail at 3.841458820694124 is 0.05.
        assert!((chi_square_sf(3.841_458_820_694_124, 1.0) - 0.05).abs() < 1e-9);
        assert_eq!(chi_square_sf(0.0, 3.0), 1.0);
    }

    #[test]
    fn uniform_counts_fit() {
        let (stat, p) = chi_square_uniform(&[100, 100, 100, 100]);
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);
        let (_, p) = chi_square_uniform(&[400, 0, 0, 0]);
        assert!(p < 1e-10);
    }

    #[test]
    fn two_sample_detects_difference() {
        let (_, p) = chi_square_two_sample(&[50, 50], &[52, 48]);
        assert!(p > 0.5);
        let (_, p) = chi_square_two_sample(&[90, 10], &[10, 90]);
        assert!(p < 1e-10);
    }

    #[test]
    fn mutual_information_extremes() {
        let xs = [0, 1, 0, 1];
        assert!((plugin_mutual_information(&xs, &xs, 2, 2) - 2f64.ln()).abs() < 1e-12);
        let ys = [0, 0, 1, 1];
        assert!(plugin_mutual_information(&xs, &ys, 2, 2).abs() < 1e-12);
    }

    #[test]
    fn quantile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.99), 99.0);
        assert_eq!(quantile(&v, 1.0), 100.0);
    }
}
