//! Diagonal-removed U-statistics built on kernel block sums.
//!
//! Every statistic reduces to row sums `Σ_j K(a_i, b_j)` of a kernel block.
//! Rows are summed with a fixed pairwise tree and then combined the same way,
//! so results do not depend on how rows are scheduled across workers. The
//! identity and product kernels take exact O(n) shortcuts.

use crate::data::{PointRef, Sample};
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::kernels::{Embedded, Evaluator, KernelSpec};

/// Default ridge added to `σ̂²` in the training objective.
pub const DEFAULT_REG: f64 = 1e-8;

const PAIRWISE_BLOCK: usize = 16;

/// Pairwise (cascade) summation with a tree shape fixed by the length.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= PAIRWISE_BLOCK {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

fn peel(ev: &Evaluator) -> (f64, &Evaluator) {
    match ev {
        Evaluator::Scaled { factor, inner } => {
            let (f, e) = peel(inner);
            (factor * f, e)
        }
        e => (1.0, e),
    }
}

/// `r_i = Σ_j K(a_i, b_j)`, skipping `j = i` when `same` (then `a` and `b`
/// must be the same embedding).
pub(crate) fn row_sums(ev: &Evaluator, a: &Embedded, b: &Embedded, same: bool, exec: Execution) -> Vec<f64> {
    let (factor, base) = peel(ev);
    let rows = match (base, a, b) {
        (Evaluator::Indicator, Embedded::Categories(ca), Embedded::Categories(cb)) => {
            let top = ca.iter().chain(cb).copied().max().unwrap_or(0) as usize;
            let mut counts = vec![0u64; top + 1];
            for &c in cb {
                counts[c as usize] += 1;
            }
            ca.iter()
                .map(|&c| (counts[c as usize] - u64::from(same)) as f64)
                .collect()
        }
        (Evaluator::Product, Embedded::Scalars(fa), Embedded::Scalars(fb)) => {
            let total = pairwise_sum(fb);
            fa.iter()
                .enumerate()
                .map(|(i, v)| v * if same { total - fb[i] } else { total })
                .collect()
        }
        _ => {
            let m = b.len();
            exec.map_collect(a.len(), |i| {
                let vals: Vec<f64> = (0..m)
                    .map(|j| if same && i == j { 0.0 } else { base.value(a, i, b, j) })
                    .collect();
                pairwise_sum(&vals)
            })
        }
    };
    if factor == 1.0 {
        rows
    } else {
        rows.into_iter().map(|r| factor * r).collect()
    }
}

fn block_sum(ev: &Evaluator, a: &Embedded, b: &Embedded, same: bool, exec: Execution) -> f64 {
    pairwise_sum(&row_sums(ev, a, b, same, exec))
}

/// Embeds every sample under one evaluator after checking they share a space.
fn prepare_all(kernel: &KernelSpec, samples: &[&Sample]) -> Result<(Evaluator, Vec<Embedded>)> {
    let first = samples[0];
    for s in &samples[1..] {
        if !first.compatible_with(s) {
            return Err(Error::IncompatiblePoints(format!(
                "{:?} vs {:?}",
                first.space(),
                s.space()
            )));
        }
    }
    let (ev, e0) = kernel.prepare(first)?;
    let mut out = vec![e0];
    for s in &samples[1..] {
        out.push(kernel.embed(s)?);
    }
    Ok((ev, out))
}

fn need(what: &'static str, s: &Sample, needed: usize) -> Result<()> {
    if s.len() < needed {
        Err(Error::SampleTooSmall {
            what,
            needed,
            got: s.len(),
        })
    } else {
        Ok(())
    }
}

fn same_size(x: &Sample, y: &Sample) -> Result<()> {
    if x.len() != y.len() {
        Err(Error::SizeMismatch(format!(
            "reference samples must have equal sizes, got {} and {}",
            x.len(),
            y.len()
        )))
    } else {
        Ok(())
    }
}

/// Result of the unbiased inner product between two empirical embeddings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UInnerResult {
    pub value: f64,
    /// Whether the diagonal was removed because both arguments are one sample.
    pub same_sample: bool,
}

/// `⟨θ_A, θ_B⟩_u`: the off-diagonal Gram mean when `same`, otherwise the full mean.
pub fn u_inner(a: &Sample, b: &Sample, kernel: &KernelSpec, same: bool) -> Result<UInnerResult> {
    u_inner_with(a, b, kernel, same, Execution::default())
}

pub fn u_inner_with(a: &Sample, b: &Sample, kernel: &KernelSpec, same: bool, exec: Execution) -> Result<UInnerResult> {
    if same {
        need("same-sample inner product", a, 2)?;
        if a.len() != b.len() || !a.compatible_with(b) || (0..a.len()).any(|i| a.point(i) != b.point(i)) {
            return Err(invalid("same-sample inner product needs identical samples"));
        }
        let (ev, e) = kernel.prepare(a)?;
        let n = a.len() as f64;
        let value = block_sum(&ev, &e, &e, true, exec) / (n * (n - 1.0));
        return Ok(UInnerResult {
            value,
            same_sample: true,
        });
    }
    need("inner product", a, 1)?;
    need("inner product", b, 1)?;
    let (ev, e) = prepare_all(kernel, &[a, b])?;
    let value = block_sum(&ev, &e[0], &e[1], false, exec) / (a.len() as f64 * b.len() as f64);
    Ok(UInnerResult {
        value,
        same_sample: false,
    })
}

/// Unbiased squared MMD. May be negative.
pub fn mmd_u_squared(x: &Sample, y: &Sample, kernel: &KernelSpec) -> Result<f64> {
    mmd_u_squared_with(x, y, kernel, Execution::default())
}

pub fn mmd_u_squared_with(x: &Sample, y: &Sample, kernel: &KernelSpec, exec: Execution) -> Result<f64> {
    need("MMD_u^2", x, 2)?;
    need("MMD_u^2", y, 2)?;
    let (ev, e) = prepare_all(kernel, &[x, y])?;
    Ok(mmd_from(&ev, &e[0], &e[1], exec))
}

fn mmd_from(ev: &Evaluator, ex: &Embedded, ey: &Embedded, exec: Execution) -> f64 {
    let (n, m) = (ex.len() as f64, ey.len() as f64);
    block_sum(ev, ex, ex, true, exec) / (n * (n - 1.0)) + block_sum(ev, ey, ey, true, exec) / (m * (m - 1.0))
        - 2.0 * block_sum(ev, ex, ey, false, exec) / (n * m)
}

/// `T(X, Y, Z) = (1/(nm)) Σ_{i,j} [K(Z_j, Y_i) − K(Z_j, X_i)]`.
pub fn t_statistic(x: &Sample, y: &Sample, z: &Sample, kernel: &KernelSpec) -> Result<f64> {
    t_statistic_with(x, y, z, kernel, Execution::default())
}

pub fn t_statistic_with(x: &Sample, y: &Sample, z: &Sample, kernel: &KernelSpec, exec: Execution) -> Result<f64> {
    let scores = witness_scores_with(z, x, y, kernel, exec)?;
    Ok(pairwise_sum(&scores) / scores.len() as f64)
}

/// Threshold `γ(X, Y, π) = π·MMD_u²(X, Y) + T(X, Y, X)`, where the X–X block
/// of `T(X, Y, X)` drops its diagonal.
pub fn gamma_threshold(x: &Sample, y: &Sample, pi: f64, kernel: &KernelSpec) -> Result<f64> {
    gamma_threshold_with(x, y, pi, kernel, Execution::default())
}

pub fn gamma_threshold_with(x: &Sample, y: &Sample, pi: f64, kernel: &KernelSpec, exec: Execution) -> Result<f64> {
    check_pi(pi)?;
    same_size(x, y)?;
    need("threshold", x, 2)?;
    let (ev, e) = prepare_all(kernel, &[x, y])?;
    let n = x.len() as f64;
    let xx = block_sum(&ev, &e[0], &e[0], true, exec) / (n * (n - 1.0));
    let yy = block_sum(&ev, &e[1], &e[1], true, exec) / (n * (n - 1.0));
    let xy = block_sum(&ev, &e[0], &e[1], false, exec) / (n * n);
    Ok(pi * (xx + yy - 2.0 * xy) + (xy - xx))
}

pub(crate) fn check_pi(pi: f64) -> Result<()> {
    if (0.0..=1.0).contains(&pi) {
        Ok(())
    } else {
        Err(invalid(format!("pi must lie in [0, 1], got {pi}")))
    }
}

/// Precomputed witness function `z ↦ (1/n) Σ_i [K(z, Y_i) − K(z, X_i)]`.
#[derive(Clone, Debug)]
pub struct WitnessModel {
    kernel: KernelSpec,
    ev: Evaluator,
    ex: Embedded,
    ey: Embedded,
    reference: Sample,
}

impl WitnessModel {
    pub fn new(kernel: &KernelSpec, x_ev: &Sample, y_ev: &Sample) -> Result<Self> {
        same_size(x_ev, y_ev)?;
        need("witness reference", x_ev, 1)?;
        let (ev, mut e) = prepare_all(kernel, &[x_ev, y_ev])?;
        let ey = e.pop().expect("two embeddings");
        let ex = e.pop().expect("two embeddings");
        Ok(Self {
            kernel: kernel.clone(),
            ev,
            ex,
            ey,
            reference: x_ev.clone(),
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Scores of every point of `z`, in order.
    pub fn scores(&self, z: &Sample, exec: Execution) -> Result<Vec<f64>> {
        need("scored sample", z, 1)?;
        if !self.reference.compatible_with(z) {
            return Err(Error::IncompatiblePoints(format!(
                "{:?} vs {:?}",
                self.reference.space(),
                z.space()
            )));
        }
        let ez = self.kernel.embed(z)?;
        let ry = row_sums(&self.ev, &ez, &self.ey, false, exec);
        let rx = row_sums(&self.ev, &ez, &self.ex, false, exec);
        let n = self.ex.len() as f64;
        Ok(ry.iter().zip(&rx).map(|(a, b)| (a - b) / n).collect())
    }

    pub fn score(&self, z: PointRef<'_>) -> Result<f64> {
        let s = Sample::from_points(&[z.to_owned()])?;
        Ok(self.scores(&s, Execution::Sequential)?[0])
    }
}

/// Witness score of a single point against the evaluation samples.
pub fn witness_score(z: PointRef<'_>, x_ev: &Sample, y_ev: &Sample, kernel: &KernelSpec) -> Result<f64> {
    WitnessModel::new(kernel, x_ev, y_ev)?.score(z)
}

pub fn witness_scores(z: &Sample, x_ev: &Sample, y_ev: &Sample, kernel: &KernelSpec) -> Result<Vec<f64>> {
    witness_scores_with(z, x_ev, y_ev, kernel, Execution::default())
}

pub fn witness_scores_with(
    z: &Sample,
    x_ev: &Sample,
    y_ev: &Sample,
    kernel: &KernelSpec,
    exec: Execution,
) -> Result<Vec<f64>> {
    WitnessModel::new(kernel, x_ev, y_ev)?.scores(z, exec)
}

/// `σ̂²` from the row sums of `H_ij = K(X_i,X_j) + K(Y_i,Y_j) − K(X_i,Y_j) − K(Y_i,X_j)`.
pub fn variance_estimator(x: &Sample, y: &Sample, kernel: &KernelSpec) -> Result<f64> {
    variance_estimator_with(x, y, kernel, Execution::default())
}

pub fn variance_estimator_with(x: &Sample, y: &Sample, kernel: &KernelSpec, exec: Execution) -> Result<f64> {
    same_size(x, y)?;
    need("variance estimator", x, 2)?;
    let (ev, e) = prepare_all(kernel, &[x, y])?;
    Ok(variance_from(&ev, &e[0], &e[1], exec))
}

fn variance_from(ev: &Evaluator, ex: &Embedded, ey: &Embedded, exec: Execution) -> f64 {
    let xx = row_sums(ev, ex, ex, false, exec);
    let yy = row_sums(ev, ey, ey, false, exec);
    let xy = row_sums(ev, ex, ey, false, exec);
    let yx = row_sums(ev, ey, ex, false, exec);
    let r: Vec<f64> = (0..xx.len()).map(|i| xx[i] + yy[i] - xy[i] - yx[i]).collect();
    variance_from_rows(&r)
}

pub(crate) fn variance_from_rows(r: &[f64]) -> f64 {
    let n = r.len() as f64;
    let sq: Vec<f64> = r.iter().map(|v| v * v).collect();
    let total = pairwise_sum(r);
    4.0 / n.powi(3) * pairwise_sum(&sq) - 4.0 / n.powi(4) * total * total
}

/// Training objective `MMD_u² / sqrt(max(σ̂², 0) + reg)`.
pub fn objective_j(x: &Sample, y: &Sample, kernel: &KernelSpec, reg: f64) -> Result<f64> {
    objective_j_with(x, y, kernel, reg, Execution::default())
}

pub fn objective_j_with(x: &Sample, y: &Sample, kernel: &KernelSpec, reg: f64, exec: Execution) -> Result<f64> {
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(invalid(format!("regularizer must be finite and non-negative, got {reg}")));
    }
    same_size(x, y)?;
    need("objective", x, 2)?;
    let (ev, e) = prepare_all(kernel, &[x, y])?;
    let mmd = mmd_from(&ev, &e[0], &e[1], exec);
    let var = variance_from(&ev, &e[0], &e[1], exec).max(0.0) + reg;
    if var <= 0.0 {
        return Err(Error::Degenerate("zero variance estimate with zero regularizer".into()));
    }
    Ok(mmd / var.sqrt())
}

/// Generalized UME statistic `Û²(Z, Y) − Û²(Z, X)` with witness locations `w`.
pub fn ume_statistic(x: &Sample, y: &Sample, z: &Sample, w: &Sample, kernel: &KernelSpec) -> Result<f64> {
    same_size(x, y)?;
    if w.is_empty() {
        return Err(invalid("UME needs at least one witness location"));
    }
    need("UME", x, 1)?;
    need("UME", z, 1)?;
    let (ev, e) = prepare_all(kernel, &[w, x, y, z])?;
    let ew = &e[0];
    let jq = w.len();
    let scale = 1.0 / (jq as f64).sqrt();
    // Mean feature vector of a sample: (1/|A|) Σ_i ψ_W(A_i).
    let mean_features = |ea: &Embedded| -> Vec<f64> {
        let n = ea.len() as f64;
        row_sums(&ev, ew, ea, false, Execution::Sequential)
            .into_iter()
            .map(|r| scale * r / n)
            .collect()
    };
    let (mx, my, mz) = (mean_features(&e[1]), mean_features(&e[2]), mean_features(&e[3]));
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).collect();
        pairwise_sum(&d)
    };
    Ok(dist2(&mz, &my) - dist2(&mz, &mx))
}
