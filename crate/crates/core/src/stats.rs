//! Small numeric helpers shared across modules.

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance (ddof = 0).
pub fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

pub fn std_dev(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

/// Type-7 (linear interpolation) quantile of already sorted data, q in [0,1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&v, 0.5)
}

/// Trapezoidal integral of y over x (x strictly increasing).
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = 0.0;
    for i in 1..x.len() {
        acc += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-1.959963984540054) - 0.025).abs() < 1e-12);
        // against midpoint-rule quadrature of the density
        for &x in &[-2.3, -0.7, 0.4, 1.1, 2.9] {
            let mut acc = 0.0;
            let steps = 400_000;
            let lo = -12.0;
            let h = (x - lo) / steps as f64;
            for i in 0..steps {
                let t = lo + (i as f64 + 0.5) * h;
                acc += (-0.5 * t * t).exp();
            }
            acc *= h / (2.0 * std::f64::consts::PI).sqrt();
            assert!(
                (normal_cdf(x) - acc).abs() < 1e-9,
                "cdf({x}) = {} vs quadrature {acc}",
                normal_cdf(x)
            );
        }
    }

    #[test]
    fn quantiles_of_uniform_grid() {
        let v: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        assert!((quantile_sorted(&v, 0.25) - 0.25).abs() < 1e-12);
        assert!((quantile_sorted(&v, 0.5) - 0.5).abs() < 1e-12);
        assert!((quantile_sorted(&v, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_of_line() {
        let x: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| 2.0 * v).collect();
        assert!((trapezoid(&x, &y) - 1.0).abs() < 1e-12);
    }
}
