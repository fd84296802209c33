//! The Ψ_π test, subsampling calibration of the null, p-values and the
//! thresholded (counting) variant of the statistic.

mod boost;
mod normal;
mod significance;

pub use boost::{boosted_test, required_batches, BoostedDecision};
pub use normal::{normal_cdf, normal_quantile, normal_sf};
pub use significance::{
    gaussian_error_rates, significance_binomial, significance_gaussian, Significance, SIGNIFICANCE_CAP,
};

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;

use crate::data::Sample;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::kernels::KernelSpec;
use crate::rng::RandomSource;
use crate::stats::{self, pairwise_sum, WitnessModel};

/// Outcome of one run of Ψ_π.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestDecision {
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    pub pi: f64,
}

/// `Ψ_π = 1{T(X, Y, Z) ≥ γ(X, Y, π)}`; ties reject.
pub fn psi_test(x: &Sample, y: &Sample, z: &Sample, pi: f64, kernel: &KernelSpec) -> Result<TestDecision> {
    psi_test_with(x, y, z, pi, kernel, Execution::default())
}

pub fn psi_test_with(
    x: &Sample,
    y: &Sample,
    z: &Sample,
    pi: f64,
    kernel: &KernelSpec,
    exec: Execution,
) -> Result<TestDecision> {
    let threshold = stats::gamma_threshold_with(x, y, pi, kernel, exec)?;
    let statistic = stats::t_statistic_with(x, y, z, kernel, exec)?;
    let reject = indicator_decision(x, y, z, pi, kernel).unwrap_or(statistic >= threshold);
    Ok(TestDecision {
        statistic,
        threshold,
        reject,
        pi,
    })
}

/// Exact `T ≥ γ` for the indicator kernel from integer category counts.
///
/// Scaling `T ≥ γ` by `n²(n−1)m` gives `A ≥ π B` with integer `A, B`.
/// Returns `None` (fall back to floating point) for other kernels, when `π`
/// is not a dyadic rational with denominator at most `2^32`, or on overflow.
fn indicator_decision(x: &Sample, y: &Sample, z: &Sample, pi: f64, kernel: &KernelSpec) -> Option<bool> {
    let mut k = kernel;
    while let KernelSpec::Scaled { factor, inner } = k {
        if !(*factor > 0.0) {
            return None;
        }
        k = inner;
    }
    if !matches!(k, KernelSpec::DiscreteIdentity { .. }) {
        return None;
    }
    let (cx, cy, cz) = (x.category_counts()?, y.category_counts()?, z.category_counts()?);
    let dot = |a: &[u64], b: &[u64]| a.iter().zip(b).map(|(p, q)| i128::from(*p) * i128::from(*q)).sum::<i128>();
    let off = |a: &[u64]| a.iter().map(|p| i128::from(*p) * (i128::from(*p) - 1)).sum::<i128>();
    let (n, m) = (x.len() as i128, z.len() as i128);
    let (zx, zy, xy, xx, yy) = (dot(&cz, &cx), dot(&cz, &cy), dot(&cx, &cy), off(&cx), off(&cy));
    let a = (zy - zx)
        .checked_mul(n * (n - 1))?
        .checked_add(xx.checked_mul(n * m)?)?
        .checked_sub(xy.checked_mul((n - 1) * m)?)?;
    let b = (xx + yy).checked_mul(n * m)?.checked_sub(xy.checked_mul(2 * (n - 1) * m)?)?;
    // π = num / 2^32 exactly, or give up.
    let scaled = pi * 4_294_967_296.0;
    if scaled.fract() != 0.0 {
        return None;
    }
    let num = scaled as i128;
    Some(a.checked_mul(1 << 32)? >= b.checked_mul(num)?)
}

/// Null draws of the statistic plus score moments of the calibration data.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationTable {
    /// `T_r` for each repetition, in repetition order.
    pub draws: Vec<f64>,
    /// Subsample size behind each draw.
    pub m: usize,
    /// Mean witness score of `X_cal`.
    pub theta0: f64,
    /// Mean witness score of `Y_cal`, when signal calibration data was given.
    pub theta1: Option<f64>,
    /// Standard deviation (n − 1 denominator) of the witness scores of `X_cal`.
    pub sigma0: f64,
}

/// Knobs for [`calibrate_null_with`].
#[derive(Clone, Debug)]
pub struct CalibrationOptions<'a> {
    /// Signal-class calibration sample used for `theta1`.
    pub y_cal: Option<&'a Sample>,
    /// Refuse calibration data that shares points with the evaluation
    /// samples. When false an overlap is only logged.
    pub strict: bool,
    pub exec: Execution,
}

impl Default for CalibrationOptions<'_> {
    fn default() -> Self {
        Self {
            y_cal: None,
            strict: true,
            exec: Execution::default(),
        }
    }
}

/// Phase 2 of the calibrated pipeline with default options.
pub fn calibrate_null(
    x_cal: &Sample,
    x_ev: &Sample,
    y_ev: &Sample,
    m: usize,
    k: usize,
    kernel: &KernelSpec,
    rng: &RandomSource,
) -> Result<CalibrationTable> {
    calibrate_null_with(x_cal, x_ev, y_ev, m, k, kernel, rng, &CalibrationOptions::default())
}

/// Draw `k` subsamples of size `m` from `x_cal` (without replacement within a
/// draw, independently across draws) and record `T(X_ev, Y_ev, subsample)`.
///
/// The statistic is the mean of per-point witness scores, so the scores of
/// `x_cal` are computed once and each draw averages a random subset of them.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_null_with(
    x_cal: &Sample,
    x_ev: &Sample,
    y_ev: &Sample,
    m: usize,
    k: usize,
    kernel: &KernelSpec,
    rng: &RandomSource,
    opts: &CalibrationOptions<'_>,
) -> Result<CalibrationTable> {
    if k == 0 {
        return Err(invalid("calibration needs at least one repetition"));
    }
    if m == 0 {
        return Err(invalid("calibration subsample size must be positive"));
    }
    if m > x_cal.len() {
        return Err(Error::InsufficientData {
            requested: m,
            available: x_cal.len(),
        });
    }
    let cal_sets = std::iter::once(x_cal).chain(opts.y_cal);
    for c in cal_sets {
        if c.overlaps(x_ev) || c.overlaps(y_ev) {
            if opts.strict {
                return Err(Error::CalibrationOverlap);
            }
            log::warn!("calibration data shares points with the evaluation samples");
        }
    }
    let model = WitnessModel::new(kernel, x_ev, y_ev)?;
    let scores = model.scores(x_cal, opts.exec)?;
    let (theta0, sigma0) = mean_std(&scores);
    let theta1 = match opts.y_cal {
        Some(y) => Some(mean_std(&model.scores(y, opts.exec)?).0),
        None => None,
    };
    let draws = opts.exec.map_collect(k, |r| {
        let mut g = rng.fork(&[r as u64]).rng();
        let picked: Vec<f64> = index::sample(&mut g, scores.len(), m).iter().map(|i| scores[i]).collect();
        pairwise_sum(&picked) / m as f64
    });
    Ok(CalibrationTable {
        draws,
        m,
        theta0,
        theta1,
        sigma0,
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = v.iter().map(|s| (s - mean) * (s - mean)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0)).sqrt())
}

const TABLE_MAGIC: &str = "# mlfht-calibration v1";

impl CalibrationTable {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Header lines `# key=value`, then one draw per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{TABLE_MAGIC}");
        let _ = writeln!(out, "# k={}", self.draws.len());
        let _ = writeln!(out, "# m={}", self.m);
        let _ = writeln!(out, "# theta0={:?}", self.theta0);
        match self.theta1 {
            Some(t) => {
                let _ = writeln!(out, "# theta1={t:?}");
            }
            None => {
                let _ = writeln!(out, "# theta1=none");
            }
        }
        let _ = writeln!(out, "# sigma0={:?}", self.sigma0);
        for d in &self.draws {
            let _ = writeln!(out, "{d:?}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == TABLE_MAGIC => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing calibration table header".into(),
                })
            }
        }
        let mut header = std::collections::HashMap::new();
        let mut draws = Vec::new();
        for (i, raw) in lines {
            let l = raw.trim();
            let perr = |message: String| Error::Parse { line: i + 1, message };
            if let Some(rest) = l.strip_prefix('#') {
                let (key, val) = rest
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| perr(format!("bad header line {l:?}")))?;
                header.insert(key.trim().to_string(), (i + 1, val.trim().to_string()));
            } else {
                draws.push(l.parse::<f64>().map_err(|e| perr(format!("bad draw {l:?}: {e}")))?);
            }
        }
        let get = |key: &str| -> Result<(usize, String)> {
            header.get(key).cloned().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing header field {key}"),
            })
        };
        let num = |key: &str| -> Result<f64> {
            let (line, v) = get(key)?;
            v.parse().map_err(|e| Error::Parse {
                line,
                message: format!("bad {key}: {e}"),
            })
        };
        let (kline, kv) = get("k")?;
        let k: usize = kv.parse().map_err(|e| Error::Parse {
            line: kline,
            message: format!("bad k: {e}"),
        })?;
        if k != draws.len() || k == 0 {
            return Err(Error::Parse {
                line: kline,
                message: format!("header announces {k} draws, file has {}", draws.len()),
            });
        }
        let (mline, mv) = get("m")?;
        let m = mv.parse().map_err(|e| Error::Parse {
            line: mline,
            message: format!("bad m: {e}"),
        })?;
        let theta1 = match get("theta1")?.1.as_str() {
            "none" => None,
            _ => Some(num("theta1")?),
        };
        Ok(Self {
            draws,
            m,
            theta0: num("theta0")?,
            theta1,
            sigma0: num("sigma0")?,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Writes through a temporary file and renames it into place.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::data::write_atomic(path.as_ref(), self.to_text().as_bytes())
    }
}

/// Empirical p-value of `t_hat` against the null draws.
///
/// Unsmoothed: `(1/k) Σ 1{t_hat < T_i}`. Smoothed: `(1 + Σ 1{t_hat ≤ T_i}) / (k + 1)`,
/// which is never zero.
pub fn estimate_p_value(t_hat: f64, table: &CalibrationTable, smoothed: bool) -> f64 {
    let k = table.draws.len() as f64;
    if smoothed {
        let c = table.draws.iter().filter(|&&t| t_hat <= t).count() as f64;
        (1.0 + c) / (k + 1.0)
    } else {
        let c = table.draws.iter().filter(|&&t| t_hat < t).count() as f64;
        c / k
    }
}

/// A chosen cut-off on witness scores together with its objective value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdChoice {
    pub t: f64,
    pub objective: f64,
    pub true_positive: f64,
    pub true_negative: f64,
}

/// Scan every observed score as a cut-off and maximize
/// `(TP + TN − 1) / sqrt(TN (1 − TN))`, with `TP = mean(s_y > t)` and
/// `TN = mean(s_x < t)`. Cut-offs with `TN ∈ {0, 1}` are skipped and ties go
/// to the smaller cut-off.
pub fn optimize_threshold_scores(sx: &[f64], sy: &[f64]) -> Result<ThresholdChoice> {
    if sx.is_empty() || sy.is_empty() {
        return Err(invalid("threshold search needs scores from both classes"));
    }
    if sx.iter().chain(sy).any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("witness score".into()));
    }
    let mut xs = sx.to_vec();
    let mut ys = sy.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = xs.iter().chain(&ys).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let mut best: Option<ThresholdChoice> = None;
    for &t in &candidates {
        let tn = xs.partition_point(|&s| s < t) as f64 / nx;
        if tn <= 0.0 || tn >= 1.0 {
            continue;
        }
        let tp = (ys.len() - ys.partition_point(|&s| s <= t)) as f64 / ny;
        let objective = (tp + tn - 1.0) / (tn * (1.0 - tn)).sqrt();
        if best.is_none_or(|b| objective > b.objective) {
            best = Some(ThresholdChoice {
                t,
                objective,
                true_positive: tp,
                true_negative: tn,
            });
        }
    }
    best.ok_or_else(|| Error::Degenerate("every candidate threshold has TN in {0, 1}".into()))
}

/// Threshold search on the witness scores of the optimization split.
pub fn optimize_threshold(
    x_opt: &Sample,
    y_opt: &Sample,
    x_ev: &Sample,
    y_ev: &Sample,
    kernel: &KernelSpec,
) -> Result<ThresholdChoice> {
    let model = WitnessModel::new(kernel, x_ev, y_ev)?;
    let exec = Execution::default();
    optimize_threshold_scores(&model.scores(x_opt, exec)?, &model.scores(y_opt, exec)?)
}

/// Calibration of the counting statistic `Σ 1{f(Z_i) > t}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdedCalibration {
    pub t: f64,
    /// `P(f(X) > t)` estimated on background calibration scores.
    pub theta0: f64,
    /// `P(f(Y) > t)` estimated on signal calibration scores, when available.
    pub theta1: Option<f64>,
}

fn exceed_rate(scores: &[f64], t: f64) -> f64 {
    scores.iter().filter(|&&s| s > t).count() as f64 / scores.len() as f64
}

impl ThresholdedCalibration {
    pub fn from_scores(t: f64, x_cal_scores: &[f64], y_cal_scores: Option<&[f64]>) -> Result<Self> {
        if x_cal_scores.is_empty() {
            return Err(invalid("thresholded calibration needs background scores"));
        }
        Ok(Self {
            t,
            theta0: exceed_rate(x_cal_scores, t),
            theta1: y_cal_scores.filter(|s| !s.is_empty()).map(|s| exceed_rate(s, t)),
        })
    }

    /// Number of scores strictly above the cut-off.
    pub fn count(&self, scores: &[f64]) -> u64 {
        scores.iter().filter(|&&s| s > self.t).count() as u64
    }
}
