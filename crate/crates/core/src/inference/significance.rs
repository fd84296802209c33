use statrs::function::gamma::ln_gamma;

use super::normal::{normal_cdf, quantile_from_log};
use super::CalibrationTable;
use crate::error::{invalid, Error, Result};

/// Largest magnitude reported for a significance; larger values saturate.
pub const SIGNIFICANCE_CAP: f64 = 38.5;

/// A discovery significance in standard-normal units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Significance {
    pub value: f64,
    /// Whether `value` was clamped to `±SIGNIFICANCE_CAP`.
    pub saturated: bool,
}

impl Significance {
    fn clamped(z: f64) -> Self {
        if z.abs() > SIGNIFICANCE_CAP {
            Self {
                value: SIGNIFICANCE_CAP.copysign(z),
                saturated: true,
            }
        } else {
            Self {
                value: z,
                saturated: false,
            }
        }
    }
}

/// `(t_hat − θ0) / (σ0 / √m)`.
pub fn significance_gaussian(t_hat: f64, m: usize, table: &CalibrationTable) -> Result<f64> {
    if m == 0 {
        return Err(invalid("significance needs m >= 1"));
    }
    if !(table.sigma0 > 0.0) {
        return Err(Error::Degenerate("calibration scores have zero spread".into()));
    }
    Ok((t_hat - table.theta0) / (table.sigma0 / (m as f64).sqrt()))
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let top = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + terms.map(|t| (t - top).exp()).sum::<f64>().ln()
}

/// `Φ⁻¹(P(Bin(m, θ0) ≤ count))`, evaluated from whichever binomial tail is
/// smaller, in log space.
pub fn significance_binomial(count: u64, m: u64, theta0: f64) -> Result<Significance> {
    if !(theta0 > 0.0 && theta0 < 1.0) {
        return Err(invalid(format!("theta0 must lie strictly inside (0, 1), got {theta0}")));
    }
    if count > m {
        return Err(invalid(format!("count {count} exceeds the number of trials {m}")));
    }
    let mf = m as f64;
    let (lt, lf) = (theta0.ln(), (-theta0).ln_1p());
    let lnm = ln_gamma(mf + 1.0);
    let log_pmf = move |j: u64| {
        let j = j as f64;
        lnm - ln_gamma(j + 1.0) - ln_gamma(mf - j + 1.0) + j * lt + (mf - j) * lf
    };
    let log_cdf = log_sum_exp((0..=count).map(log_pmf));
    let log_sf = log_sum_exp((count + 1..=m).map(log_pmf));
    let z = if log_cdf <= log_sf {
        quantile_from_log(log_cdf)
    } else {
        -quantile_from_log(log_sf)
    };
    Ok(Significance::clamped(z))
}

/// Normal approximations of the type I and type II errors of the rule
/// `mean score ≥ γ` on `m` points.
pub fn gaussian_error_rates(gamma: f64, cal: &CalibrationTable, var0: f64, var1: f64, m: usize) -> Result<(f64, f64)> {
    if !(var0 > 0.0 && var1 > 0.0) {
        return Err(invalid("score variances must be positive"));
    }
    if m == 0 {
        return Err(invalid("error rates need m >= 1"));
    }
    let theta1 = cal
        .theta1
        .ok_or_else(|| invalid("calibration table lacks the signal-class mean theta1"))?;
    let mf = m as f64;
    let type1 = normal_cdf(-(gamma - cal.theta0) / (var0 / mf).sqrt());
    let type2 = normal_cdf(-(theta1 - gamma) / (var1 / mf).sqrt());
    Ok((type1, type2))
}
