//! Standard normal cumulative distribution.

use statrs::function::erf::erfc;
use std::f64::consts::SQRT_2;

/// `Φ(x)`. Written through `erfc` so the lower tail keeps full relative precision.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_about_zero() {
        assert_eq!(normal_cdf(0.0), 0.5);
        for &x in &[0.3, 1.0, 2.5, 6.0] {
            assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn known_quantiles() {
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-10);
        assert!((normal_cdf(-1.0) - 0.15865525393145707).abs() < 1e-10);
    }

    #[test]
    fn tail_is_not_flushed() {
        let v = normal_cdf(-20.0);
        assert!(v > 0.0 && v < 1e-80);
    }
}
