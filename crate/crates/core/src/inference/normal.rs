//! Standard normal tail functions built on the statrs error functions.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::{erfc, erfc_inv};

/// `Φ(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `1 − Φ(x)`, accurate in the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// `Φ⁻¹(p)`, with `Φ⁻¹(0) = −∞` and `Φ⁻¹(1) = +∞`.
pub fn normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Below this log-probability `exp` leaves the normal double range.
const LOG_DIRECT_LIMIT: f64 = -700.0;

/// `Φ⁻¹(exp(log_p))` for a lower-tail probability `exp(log_p) ≤ 1/2`.
///
/// Far in the tail the asymptotic series of `ln Φ(−x)` is inverted by Newton
/// steps, so that probabilities below the smallest double still map to a
/// finite quantile.
pub(crate) fn quantile_from_log(log_p: f64) -> f64 {
    if log_p == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if log_p > LOG_DIRECT_LIMIT {
        return normal_quantile(log_p.exp());
    }
    let log_tail = |x: f64| {
        let x2 = x * x;
        -0.5 * x2 - x.ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2)).ln()
    };
    let mut x = (-2.0 * log_p).sqrt();
    for _ in 0..60 {
        let step = (log_tail(x) - log_p) / (x + 1.0 / x);
        x += step;
        if step.abs() < 1e-15 * x {
            break;
        }
    }
    -x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        // Φ(−5) from a 50-digit evaluation.
        let phi5 = 2.866515718791939e-7;
        assert!((normal_cdf(-5.0) - phi5).abs() < 1e-10 * phi5);
        assert_eq!(normal_sf(5.0), normal_cdf(-5.0));
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-14);
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(normal_quantile(1.0), f64::INFINITY);
    }

    #[test]
    fn log_quantile_is_continuous_across_the_switch() {
        let below = quantile_from_log(LOG_DIRECT_LIMIT - 1e-9);
        let above = quantile_from_log(LOG_DIRECT_LIMIT + 1e-9);
        assert!((below - above).abs() < 1e-8, "{below} vs {above}");
        for lp in [-2.0f64, -50.0, -300.0] {
            assert!((quantile_from_log(lp) - normal_quantile(lp.exp())).abs() < 1e-10);
        }
        assert!(quantile_from_log(-1e4) < -140.0);
    }
}
