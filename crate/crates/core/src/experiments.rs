//! The discrete toy problem, Monte Carlo error grids over `(m, n)`, contour
//! extraction and power curves against mixtures.

use std::fmt::Write as _;

use crate::data::{mixture_with, DiscreteDistribution, Sample};
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::inference::psi_test_with;
use crate::kernels::KernelSpec;
use crate::rng::RandomSource;

pub const DEFAULT_GRID: [usize; 8] = [25, 50, 100, 200, 400, 800, 1600, 3200];
pub const DEFAULT_TRIALS: usize = 1000;

/// Two distributions on `1..=k` that differ by `±ε/k` on alternate points.
#[derive(Clone, Debug)]
pub struct ToyInstance {
    pub k: usize,
    pub epsilon: f64,
    pub px: DiscreteDistribution,
    pub py: DiscreteDistribution,
    pub kernel: KernelSpec,
    /// `4ε²/k`.
    pub true_mmd_sq: f64,
}

impl ToyInstance {
    /// The same problem with the roles of `px` and `py` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            px: self.py.clone(),
            py: self.px.clone(),
            ..self.clone()
        }
    }
}

pub fn make_toy(k: usize, epsilon: f64) -> Result<ToyInstance> {
    if k == 0 {
        return Err(invalid("toy support size must be positive"));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(invalid(format!("toy perturbation must lie in [0, 1), got {epsilon}")));
    }
    if k % 2 == 1 {
        log::warn!("odd toy support size {k}: the pmfs are renormalized and the MMD formula is approximate");
    }
    let kf = k as f64;
    let raw: Vec<f64> = (1..=k)
        .map(|i| (1.0 + epsilon * if i % 2 == 1 { 1.0 } else { -1.0 }) / kf)
        .collect();
    let px_raw: Vec<f64> = if k.is_multiple_of(2) {
        raw
    } else {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|p| p / s).collect()
    };
    let mut py_raw: Vec<f64> = px_raw.iter().map(|p| 2.0 / kf - p).collect();
    if k % 2 == 1 {
        let s: f64 = py_raw.iter().sum();
        py_raw.iter_mut().for_each(|p| *p /= s);
    }
    Ok(ToyInstance {
        k,
        epsilon,
        px: DiscreteDistribution::new(px_raw)?,
        py: DiscreteDistribution::new(py_raw)?,
        kernel: KernelSpec::DiscreteIdentity { k: k as u32 },
        true_mmd_sq: 4.0 * epsilon * epsilon / kf,
    })
}

/// One `(m, n)` cell of an [`ErrorGrid`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub m: usize,
    pub n: usize,
    /// Zero for skipped cells (`n < 2`).
    pub trials: usize,
    /// Rejections under the null.
    pub type1: usize,
    /// Acceptances under the alternative.
    pub type2: usize,
}

impl GridCell {
    pub fn skipped(&self) -> bool {
        self.trials == 0
    }

    pub fn type1_rate(&self) -> f64 {
        rate(self.type1, self.trials)
    }

    pub fn type2_rate(&self) -> f64 {
        rate(self.type2, self.trials)
    }

    /// Sum of the two error rates.
    pub fn total(&self) -> f64 {
        self.type1_rate() + self.type2_rate()
    }

    /// Standard error of [`GridCell::total`]; the two addends come from
    /// independent draws, so their binomial variances add.
    pub fn se(&self) -> f64 {
        let t = self.trials as f64;
        let (a, b) = (self.type1_rate(), self.type2_rate());
        (a * (1.0 - a) / t + b * (1.0 - b) / t).sqrt()
    }
}

fn rate(count: usize, trials: usize) -> f64 {
    if trials == 0 {
        f64::NAN
    } else {
        count as f64 / trials as f64
    }
}

/// Monte Carlo error rates over an `m × n` grid of sample sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorGrid {
    pub m_values: Vec<usize>,
    pub n_values: Vec<usize>,
    /// Row-major in `m`: cell `(i, j)` sits at `i * n_values.len() + j`.
    pub cells: Vec<GridCell>,
}

const GRID_HEADER: &str = "m,n,trials,type1,type2,total,se";

impl ErrorGrid {
    pub fn cell(&self, mi: usize, ni: usize) -> &GridCell {
        &self.cells[mi * self.n_values.len() + ni]
    }

    /// CSV with header `m,n,trials,type1,type2,total,se`; skipped cells
    /// carry `skipped` in the last two columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(GRID_HEADER);
        out.push('\n');
        for c in &self.cells {
            if c.skipped() {
                let _ = writeln!(out, "{},{},0,0,0,skipped,skipped", c.m, c.n);
            } else {
                let _ = writeln!(out, "{},{},{},{},{},{},{}", c.m, c.n, c.trials, c.type1, c.type2, c.total(), c.se());
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == GRID_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header `{GRID_HEADER}`"),
                })
            }
        }
        let mut cells = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 7 {
                return Err(bad(format!("expected 7 fields, found {}", f.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("`{s}`: {e}")));
            cells.push(GridCell {
                m: int(f[0])?,
                n: int(f[1])?,
                trials: int(f[2])?,
                type1: int(f[3])?,
                type2: int(f[4])?,
            });
        }
        let mut m_values: Vec<usize> = Vec::new();
        let mut n_values: Vec<usize> = Vec::new();
        for c in &cells {
            if !m_values.contains(&c.m) {
                m_values.push(c.m);
            }
            if !n_values.contains(&c.n) {
                n_values.push(c.n);
            }
        }
        let grid = ErrorGrid { m_values, n_values, cells };
        let complete = grid.cells.len() == grid.m_values.len() * grid.n_values.len()
            && grid.cells.iter().enumerate().all(|(idx, c)| {
                c.m == grid.m_values[idx / grid.n_values.len()] && c.n == grid.n_values[idx % grid.n_values.len()]
            });
        if !complete {
            return Err(invalid("grid CSV rows do not form a complete m-major grid"));
        }
        Ok(grid)
    }
}

fn check_grid(name: &str, grid: &[usize]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(format!("{name} grid is empty")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(format!("{name} grid must be strictly increasing")));
    }
    Ok(())
}

/// One trial of `psi_test` with `Z` drawn from the `nu`-mixture.
fn run_trial(
    inst: &ToyInstance,
    n: usize,
    m: usize,
    nu: f64,
    pi: f64,
    rng: &RandomSource,
) -> Result<bool> {
    let mut r = rng.rng();
    let k = inst.k as u32;
    let x = Sample::categorical(k, inst.px.sample_with(n, &mut r))?;
    let y = Sample::categorical(k, inst.py.sample_with(n, &mut r))?;
    let z = Sample::categorical(k, mixture_with(&inst.px, &inst.py, nu, m, &mut r))?;
    Ok(psi_test_with(&x, &y, &z, pi, &inst.kernel, Execution::Sequential)?.reject)
}

/// Type-I and type-II error counts of `psi_test` for every `(m, n)` pair.
///
/// Null and alternative trials use independent draws. Trial `t` of cell
/// `(m, n)` under hypothesis `h` uses the stream `rng.fork(&[m, n, h, t])`,
/// so counts do not depend on `exec` or the number of workers.
pub fn tradeoff_sweep(
    inst: &ToyInstance,
    m_grid: &[usize],
    n_grid: &[usize],
    trials: usize,
    pi: f64,
    rng: &RandomSource,
    exec: Execution,
) -> Result<ErrorGrid> {
    check_grid("m", m_grid)?;
    check_grid("n", n_grid)?;
    if trials < 100 {
        return Err(invalid(format!("need at least 100 trials per cell, got {trials}")));
    }
    crate::stats::check_pi(pi)?;
    if m_grid[0] == 0 {
        return Err(invalid("m grid values must be positive"));
    }
    let cols = n_grid.len();
    let cells = exec.try_map_collect::<_, Error, _>(m_grid.len() * cols, |idx| {
        let (m, n) = (m_grid[idx / cols], n_grid[idx % cols]);
        if n < 2 {
            return Ok(GridCell {
                m,
                n,
                trials: 0,
                type1: 0,
                type2: 0,
            });
        }
        let (mut type1, mut type2) = (0, 0);
        for t in 0..trials as u64 {
            let key = [m as u64, n as u64];
            if run_trial(inst, n, m, 0.0, pi, &rng.fork(&[key[0], key[1], 0, t]))? {
                type1 += 1;
            }
            if !run_trial(inst, n, m, 1.0, pi, &rng.fork(&[key[0], key[1], 1, t]))? {
                type2 += 1;
            }
        }
        Ok(GridCell {
            m,
            n,
            trials,
            type1,
            type2,
        })
    })?;
    Ok(ErrorGrid {
        m_values: m_grid.to_vec(),
        n_values: n_grid.to_vec(),
        cells,
    })
}

/// A point where the interpolated total error crosses the contour level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourPoint {
    pub m: f64,
    pub n: f64,
    /// Monte Carlo standard error of the interpolated coordinate, on the
    /// natural-log scale, propagated from the two bracketing cells.
    pub log_se: f64,
}

/// First downward crossing of `level` along `(coord, total, se)` triples,
/// interpolated in log-log space. Falls back to linear error when the lower
/// bracket has zero error.
fn crossing(points: &[(usize, f64, f64)], level: f64) -> Option<(f64, f64)> {
    let i = points.windows(2).position(|w| w[0].1 > level && w[1].1 <= level)?;
    let ((c1, e1, s1), (c2, e2, s2)) = (points[i], points[i + 1]);
    let (u1, u2) = ((c1 as f64).ln(), (c2 as f64).ln());
    let du = u2 - u1;
    let (frac, d1, d2) = if e2 > 0.0 {
        let (l1, l2, lv) = (e1.ln(), e2.ln(), level.ln());
        let span = l1 - l2;
        // Derivatives of u* on the log-error scale, converted by δ ln e = se / e.
        (
            (l1 - lv) / span,
            du * (lv - l2) / (span * span) * s1 / e1,
            du * (l1 - lv) / (span * span) * s2 / e2,
        )
    } else {
        let span = e1 - e2;
        (
            (e1 - level) / span,
            du * (level - e2) / (span * span) * s1,
            du * (e1 - level) / (span * span) * s2,
        )
    };
    Some(((u1 + frac * du).exp(), (d1 * d1 + d2 * d2).sqrt()))
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("contour level must lie in (0, 1), got {level}")))
    }
}

/// For each `m` column, the `n` at which total error first drops to `level`.
/// Columns without a crossing are omitted; skipped cells are ignored.
pub fn extract_contour(grid: &ErrorGrid, level: f64) -> Result<Vec<ContourPoint>> {
    check_level(level)?;
    let mut out = Vec::new();
    for (mi, &m) in grid.m_values.iter().enumerate() {
        let col: Vec<(usize, f64, f64)> = (0..grid.n_values.len())
            .map(|ni| grid.cell(mi, ni))
            .filter(|c| !c.skipped())
            .map(|c| (c.n, c.total(), c.se()))
            .collect();
        if let Some((n, log_se)) = crossing(&col, level) {
            out.push(ContourPoint { m: m as f64, n, log_se });
        }
    }
    Ok(out)
}

/// For each `n` row, the `m` at which total error first drops to `level`.
pub fn extract_contour_rows(grid: &ErrorGrid, level: f64) -> Result<Vec<ContourPoint>> {
    check_level(level)?;
    let mut out = Vec::new();
    for (ni, &n) in grid.n_values.iter().enumerate() {
        let row: Vec<(usize, f64, f64)> = (0..grid.m_values.len())
            .map(|mi| grid.cell(mi, ni))
            .filter(|c| !c.skipped())
            .map(|c| (c.m, c.total(), c.se()))
            .collect();
        if let Some((m, log_se)) = crossing(&row, level) {
            out.push(ContourPoint { m, n: n as f64, log_se });
        }
    }
    Ok(out)
}

/// Contour CSV with header `m,n_at_level`.
pub fn contour_to_csv(points: &[ContourPoint]) -> String {
    let mut out = String::from("m,n_at_level\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.m, p.n);
    }
    out
}

/// Compares the contour's `n` at `m = at` with its `m` at `n = at`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsymmetryWitness {
    pub at: usize,
    pub level: f64,
    /// Interpolated `n` on the column `m = at`.
    pub n_at_m: Option<f64>,
    /// Interpolated `m` on the row `n = at`.
    pub m_at_n: Option<f64>,
    /// Combined standard error of the two coordinates, in sample-size units.
    pub combined_se: f64,
    /// The two coordinates differ by more than three combined standard
    /// errors, or only one of them crosses the level inside the grid.
    pub asymmetric: bool,
}

/// A symmetric contour would satisfy `n_at_m == m_at_n`.
pub fn asymmetry_witness(grid: &ErrorGrid, level: f64, at: usize) -> Result<AsymmetryWitness> {
    let cols = extract_contour(grid, level)?;
    let rows = extract_contour_rows(grid, level)?;
    let col = cols.iter().find(|p| p.m == at as f64);
    let row = rows.iter().find(|p| p.n == at as f64);
    let (asymmetric, combined_se) = match (col, row) {
        (Some(c), Some(r)) => {
            let se = ((c.n * c.log_se).powi(2) + (r.m * r.log_se).powi(2)).sqrt();
            ((c.n - r.m).abs() > 3.0 * se, se)
        }
        (Some(_), None) | (None, Some(_)) => (true, f64::NAN),
        (None, None) => (false, f64::NAN),
    };
    Ok(AsymmetryWitness {
        at,
        level,
        n_at_m: col.map(|p| p.n),
        m_at_n: row.map(|p| p.m),
        combined_se,
        asymmetric,
    })
}

/// Ratio of the largest to the smallest `m · n` over contour points whose
/// `m` lies in the middle half (on the log scale) of `[m_lo, m_hi]`.
/// `None` when fewer than two points fall in that window.
pub fn product_spread(points: &[ContourPoint], m_lo: f64, m_hi: f64) -> Option<f64> {
    let (a, b) = (m_lo.ln(), m_hi.ln());
    let (lo, hi) = (a + 0.25 * (b - a), a + 0.75 * (b - a));
    let prods: Vec<f64> = points
        .iter()
        .filter(|p| (lo..=hi).contains(&p.m.ln()))
        .map(|p| p.m * p.n)
        .collect();
    if prods.len() < 2 {
        return None;
    }
    let max = prods.iter().cloned().fold(f64::MIN, f64::max);
    let min = prods.iter().cloned().fold(f64::MAX, f64::min);
    Some(max / min)
}

/// Rejection frequency at one mixture rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerPoint {
    pub nu: f64,
    pub trials: usize,
    pub rejections: usize,
}

impl PowerPoint {
    pub fn rate(&self) -> f64 {
        rate(self.rejections, self.trials)
    }

    pub fn se(&self) -> f64 {
        let p = self.rate();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Rejection rates of `psi_test` when `Z ~ (1 − ν) P_X + ν P_Y`. Trial `t`
/// at grid index `i` uses `rng.fork(&[i, t])`.
#[allow(clippy::too_many_arguments)]
pub fn power_curve(
    inst: &ToyInstance,
    nu_grid: &[f64],
    m: usize,
    n: usize,
    trials: usize,
    pi: f64,
    rng: &RandomSource,
    exec: Execution,
) -> Result<Vec<PowerPoint>> {
    if let Some(bad) = nu_grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(invalid(format!("mixture rate {bad} outside [0, 1]")));
    }
    if trials == 0 || m == 0 || n < 2 {
        return Err(invalid("power curve needs trials >= 1, m >= 1 and n >= 2"));
    }
    crate::stats::check_pi(pi)?;
    let per_nu = nu_grid.len();
    let flat = exec.try_map_collect(per_nu * trials, |idx| {
        let (i, t) = (idx / trials, idx % trials);
        run_trial(inst, n, m, nu_grid[i], pi, &rng.fork(&[i as u64, t as u64]))
    })?;
    Ok(nu_grid
        .iter()
        .enumerate()
        .map(|(i, &nu)| PowerPoint {
            nu,
            trials,
            rejections: flat[i * trials..(i + 1) * trials].iter().filter(|r| **r).count(),
        })
        .collect())
}

/// CSV with header `nu,trials,rejections,rate,se`.
pub fn power_to_csv(points: &[PowerPoint]) -> String {
    let mut out = String::from("nu,trials,rejections,rate,se\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{},{}", p.nu, p.trials, p.rejections, p.rate(), p.se());
    }
    out
}
