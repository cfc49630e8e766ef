use statrs::distribution::{ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Upper standard-normal quantile for a one-sided level `alpha`.
pub fn z_upper(alpha: f64) -> f64 {
    std_normal().inverse_cdf(1.0 - alpha)
}

/// Wilson score interval for `k` successes in `n` trials at two-sided level `alpha`.
pub fn wilson_interval(k: usize, n: usize, alpha: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = z_upper(alpha / 2.0);
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if p == 1.0 { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// One-sided p-value for H1: p2 > p1 with a pooled two-proportion z test.
pub fn increase_p_value(k1: usize, n1: usize, k2: usize, n2: usize) -> f64 {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let diff = k2 as f64 / n2f - k1 as f64 / n1f;
    if se == 0.0 {
        return if diff > 0.0 { 0.0 } else { 1.0 };
    }
    1.0 - std_normal().cdf(diff / se)
}

/// Successive cells show no significant increase at level `alpha`.
pub fn non_increasing(counts: &[(usize, usize)], alpha: f64) -> bool {
    counts.windows(2).all(|w| increase_p_value(w[0].0, w[0].1, w[1].0, w[1].1) >= alpha)
}

/// Successive cells show no significant decrease at level `alpha`.
pub fn non_decreasing(counts: &[(usize, usize)], alpha: f64) -> bool {
    counts.windows(2).all(|w| increase_p_value(w[1].0, w[1].1, w[0].0, w[0].1) >= alpha)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Linear-interpolated quantile (type 7).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
