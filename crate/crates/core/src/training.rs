//! Kernel training: minibatch Adam ascent on `Ĵ` with early stopping.

use std::fmt::Write as _;

use crate::data::{subsample_with, DatasetSplit, Sample, Space};
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::kernels::{logistic, median_heuristic, sq_dist, FeatureNet, KernelSpec, Trace};
use crate::rng::RandomSource;
use crate::stats::{self, pairwise_sum, DEFAULT_REG};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Points drawn from each class per minibatch.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Ridge added to `σ̂²` inside `Ĵ`.
    pub reg: f64,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            reg: DEFAULT_REG,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning rate must be positive"));
        }
        if self.batch_size < 4 {
            return Err(invalid(format!("batch size must be at least 4, got {}", self.batch_size)));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(invalid("Adam moment parameters must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(invalid("Adam eps must be positive"));
        }
        if !(self.reg >= 0.0 && self.reg.is_finite()) {
            return Err(invalid("regularizer must be non-negative"));
        }
        Ok(())
    }
}

/// Validation points per class: `⌊min(√(10 n), n/10)⌋`, at least 2.
pub fn validation_size(n_tr: usize) -> usize {
    let n = n_tr as f64;
    ((10.0 * n).sqrt().min(0.1 * n).floor() as usize).max(2)
}

/// First and second moment estimates of Adam.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update in the ascent direction.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainConfig) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient lengths");
    if state.m.len() != params.len() {
        *state = AdamState::new(params.len());
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] += cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
    }
}

/// `Ĵ` together with its gradient in canonical parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

pub fn grad_objective(kernel: &KernelSpec, x: &Sample, y: &Sample, reg: f64) -> Result<ObjectiveGrad> {
    grad_objective_with(kernel, x, y, reg, Execution::default())
}

/// Forward quantities for one pooled point.
struct Embedding {
    a: Vec<f64>,
    b: Vec<f64>,
    trace_a: Option<Trace>,
    trace_b: Option<Trace>,
}

/// Gradient contributions gathered along one row of the pooled Gram matrix.
struct RowGrad {
    ga: Vec<f64>,
    gb: Vec<f64>,
    scalars: [f64; 3],
}

/// Exact gradient of `Ĵ` by reverse accumulation through the pooled Gram
/// matrix of `x ∪ y` and then through the feature networks.
pub fn grad_objective_with(
    kernel: &KernelSpec,
    x: &Sample,
    y: &Sample,
    reg: f64,
    exec: Execution,
) -> Result<ObjectiveGrad> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch(format!("batch sizes {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::SampleTooSmall {
            what: "objective gradient",
            needed: 2,
            got: x.len(),
        });
    }
    if kernel.num_params() == 0 {
        return Ok(ObjectiveGrad {
            value: stats::objective_j_with(x, y, kernel, reg, exec)?,
            grad: Vec::new(),
        });
    }
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(invalid("regularizer must be non-negative"));
    }
    if !x.compatible_with(y) {
        return Err(Error::IncompatiblePoints("batches live in different spaces".into()));
    }
    kernel.check_space(x.space())?;
    let n = x.len();
    let pooled: Vec<&[f64]> = (0..n).map(|i| x.real_point(i)).chain((0..n).map(|i| y.real_point(i))).collect();
    let np = pooled.len();

    let (inv_s2, inv_s02, tau, mixed) = match kernel {
        KernelSpec::DeepO { log_sigma } | KernelSpec::DeepG { log_sigma, .. } => ((-2.0 * log_sigma).exp(), 0.0, 0.0, false),
        KernelSpec::DeepM {
            log_sigma,
            log_sigma0,
            logit_tau,
            ..
        } => ((-2.0 * log_sigma).exp(), (-2.0 * log_sigma0).exp(), logistic(*logit_tau), true),
        _ => unreachable!("only deep kernels carry parameters"),
    };
    let emb: Vec<Embedding> = pooled
        .iter()
        .map(|p| match kernel {
            KernelSpec::DeepO { .. } => Embedding {
                a: p.to_vec(),
                b: Vec::new(),
                trace_a: None,
                trace_b: None,
            },
            KernelSpec::DeepG { phi, .. } => {
                let (a, t) = phi.forward_traced(p);
                Embedding {
                    a,
                    b: Vec::new(),
                    trace_a: Some(t),
                    trace_b: None,
                }
            }
            KernelSpec::DeepM { phi, phi_prime, .. } => {
                let (a, ta) = phi.forward_traced(p);
                let (s, tb) = phi_prime.forward_traced(p);
                let b = s.iter().zip(p.iter()).map(|(u, v)| u + v).collect();
                Embedding {
                    a,
                    b,
                    trace_a: Some(ta),
                    trace_b: Some(tb),
                }
            }
            _ => unreachable!(),
        })
        .collect();

    // Pooled Gram factors: G on the first embedding, G0 on the second.
    let factors: Vec<Vec<(f64, f64)>> = exec.map_collect(np, |p| {
        (0..np)
            .map(|q| {
                let g = (-sq_dist(&emb[p].a, &emb[q].a) * inv_s2).exp();
                let g0 = if mixed { (-sq_dist(&emb[p].b, &emb[q].b) * inv_s02).exp() } else { 1.0 };
                (g, g0)
            })
            .collect()
    });
    let kv = |p: usize, q: usize| {
        let (g, g0) = factors[p][q];
        if mixed {
            ((1.0 - tau) * g + tau) * g0
        } else {
            g
        }
    };

    let nf = n as f64;
    let off = 1.0 / (nf * (nf - 1.0));
    let sum_block = |p0: usize, q0: usize, skip_diag: bool| -> f64 {
        let rows: Vec<f64> = (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..n).map(|j| if skip_diag && i == j { 0.0 } else { kv(p0 + i, q0 + j) }).collect();
                pairwise_sum(&v)
            })
            .collect();
        pairwise_sum(&rows)
    };
    let mmd = off * sum_block(0, 0, true) + off * sum_block(n, n, true) - 2.0 * sum_block(0, n, false) / (nf * nf);
    let r: Vec<f64> = (0..n)
        .map(|i| {
            let v: Vec<f64> = (0..n)
                .map(|j| kv(i, j) + kv(n + i, n + j) - kv(i, n + j) - kv(n + i, j))
                .collect();
            pairwise_sum(&v)
        })
        .collect();
    let var = stats::variance_from_rows(&r);
    let denom2 = var.max(0.0) + reg;
    if !(denom2 > 0.0) {
        return Err(Error::Degenerate("zero variance estimate with zero regularizer".into()));
    }
    let s = denom2.sqrt();
    let value = mmd / s;
    let d_mmd = 1.0 / s;
    let d_var = if var > 0.0 { -mmd / (2.0 * s * s * s) } else { 0.0 };
    let total_r = pairwise_sum(&r);
    let gvar: Vec<f64> = r
        .iter()
        .map(|ri| d_var * (8.0 * ri / nf.powi(3) - 8.0 * total_r / nf.powi(4)))
        .collect();
    // dĴ/dK for every ordered pooled pair (X first, then Y).
    let w = |p: usize, q: usize| -> f64 {
        let (px, qx) = (p < n, q < n);
        let (i, j) = (p % n, q % n);
        match (px, qx) {
            (true, true) | (false, false) => (if i == j { 0.0 } else { d_mmd * off }) + gvar[i],
            (true, false) => -2.0 * d_mmd / (nf * nf) - gvar[i],
            (false, true) => -gvar[i],
        }
    };

    let da = emb[0].a.len();
    let db = emb[0].b.len();
    let rows: Vec<RowGrad> = exec.map_collect(np, |p| {
        let mut ga = vec![0.0; da];
        let mut gb = vec![0.0; db];
        let mut sc = [Vec::with_capacity(np), Vec::with_capacity(np), Vec::with_capacity(np)];
        for q in 0..np {
            let (g, g0) = factors[p][q];
            let wpq = w(p, q);
            // K is symmetric, so both ordered entries move with e_p.
            let sym = wpq + w(q, p);
            let d2a = sq_dist(&emb[p].a, &emb[q].a);
            let (dk_dg, dk_dg0) = if mixed { ((1.0 - tau) * g0, (1.0 - tau) * g + tau) } else { (1.0, 0.0) };
            let coef_a = sym * dk_dg * (-2.0 * inv_s2) * g;
            for (k, o) in ga.iter_mut().enumerate() {
                *o += coef_a * (emb[p].a[k] - emb[q].a[k]);
            }
            sc[0].push(wpq * dk_dg * 2.0 * inv_s2 * d2a * g);
            if mixed {
                let d2b = sq_dist(&emb[p].b, &emb[q].b);
                let coef_b = sym * dk_dg0 * (-2.0 * inv_s02) * g0;
                for (k, o) in gb.iter_mut().enumerate() {
                    *o += coef_b * (emb[p].b[k] - emb[q].b[k]);
                }
                sc[1].push(wpq * dk_dg0 * 2.0 * inv_s02 * d2b * g0);
                sc[2].push(wpq * (1.0 - g) * g0 * tau * (1.0 - tau));
            }
        }
        RowGrad {
            ga,
            gb,
            scalars: [pairwise_sum(&sc[0]), pairwise_sum(&sc[1]), pairwise_sum(&sc[2])],
        }
    });
    let scalar = |k: usize| pairwise_sum(&rows.iter().map(|r| r.scalars[k]).collect::<Vec<_>>());

    let mut grad = vec![0.0; kernel.num_params()];
    match kernel {
        KernelSpec::DeepO { .. } => grad[0] = scalar(0),
        KernelSpec::DeepG { phi, .. } => {
            grad[0] = scalar(0);
            for (e, rg) in emb.iter().zip(&rows) {
                phi.backward(e.trace_a.as_ref().expect("traced"), &rg.ga, &mut grad[1..]);
            }
        }
        KernelSpec::DeepM { phi, phi_prime, .. } => {
            grad[0] = scalar(0);
            grad[1] = scalar(1);
            grad[2] = scalar(2);
            let split = 3 + phi.num_params();
            let (gphi, gphip) = grad[3..].split_at_mut(split - 3);
            for (e, rg) in emb.iter().zip(&rows) {
                phi.backward(e.trace_a.as_ref().expect("traced"), &rg.ga, gphi);
                phi_prime.backward(e.trace_b.as_ref().expect("traced"), &rg.gb, gphip);
            }
        }
        _ => unreachable!(),
    }
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("objective gradient".into()));
    }
    Ok(ObjectiveGrad { value, grad })
}

/// Deep kernel families that can be trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    DeepO,
    DeepG,
    DeepM,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deep_o" => Ok(Self::DeepO),
            "deep_g" => Ok(Self::DeepG),
            "deep_m" => Ok(Self::DeepM),
            other => Err(invalid(format!("unknown architecture {other:?} (deep_o, deep_g, deep_m)"))),
        }
    }
}

const MEDIAN_SUBSAMPLE: usize = 512;

fn median_or_one(x: &Sample, y: &Sample) -> f64 {
    match median_heuristic(x, y) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("median heuristic failed ({e}); using bandwidth 1");
            1.0
        }
    }
}

fn mapped(s: &Sample, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Sample> {
    let rows: Vec<Vec<f64>> = (0..s.len()).map(|i| f(s.real_point(i))).collect();
    let dim = rows[0].len();
    Sample::real(dim, rows.concat())
}

/// Random feature networks with bandwidths from the median heuristic on up to
/// 512 pooled points, and `τ = 1/2` for the mixing kernel.
///
/// `hidden` lists the hidden widths; `feature_dim` is the output width of `φ`.
pub fn init_kernel(
    arch: Architecture,
    hidden: &[usize],
    feature_dim: usize,
    x: &Sample,
    y: &Sample,
    rng: &RandomSource,
) -> Result<KernelSpec> {
    let dim = match x.space() {
        Space::Real { dim } => dim,
        Space::Categorical { .. } => return Err(invalid("deep kernels need real-valued data")),
    };
    let mut g = rng.rng();
    let half = MEDIAN_SUBSAMPLE / 2;
    let xs = subsample_with(x, x.len().min(half), &mut g)?;
    let ys = subsample_with(y, y.len().min(half), &mut g)?;
    let widths = |out: usize| -> Vec<usize> {
        let mut w = vec![dim];
        w.extend_from_slice(hidden);
        w.push(out);
        w
    };
    match arch {
        Architecture::DeepO => Ok(KernelSpec::deep_o(median_or_one(&xs, &ys))),
        Architecture::DeepG => {
            let phi = FeatureNet::random(&widths(feature_dim), &mut g)?;
            let sigma = median_or_one(&mapped(&xs, |p| phi.forward(p))?, &mapped(&ys, |p| phi.forward(p))?);
            Ok(KernelSpec::deep_g(phi, sigma))
        }
        Architecture::DeepM => {
            let phi = FeatureNet::random(&widths(feature_dim), &mut g)?;
            let phi_prime = FeatureNet::random(&widths(dim), &mut g)?;
            let sigma = median_or_one(&mapped(&xs, |p| phi.forward(p))?, &mapped(&ys, |p| phi.forward(p))?);
            let shift = |p: &[f64]| -> Vec<f64> { phi_prime.forward(p).iter().zip(p).map(|(a, b)| a + b).collect() };
            let sigma0 = median_or_one(&mapped(&xs, shift)?, &mapped(&ys, shift)?);
            KernelSpec::deep_m(phi, phi_prime, sigma, sigma0, 0.5)
        }
    }
}

/// Per-epoch record of a training run. Epoch 0 is the initialization.
#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Optimization epochs performed (epoch 0 excluded).
    pub epochs_run: usize,
    /// Mean minibatch `Ĵ` per epoch.
    pub train_objective: Vec<f64>,
    /// `Ĵ` on the validation slice after each epoch.
    pub val_objective: Vec<f64>,
    pub best_epoch: usize,
    /// Kernel at the best checkpoint.
    pub kernel: KernelSpec,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_objective,val_objective\n");
        for (e, (t, v)) in self.train_objective.iter().zip(&self.val_objective).enumerate() {
            let _ = writeln!(out, "{e},{t:?},{v:?}");
        }
        out
    }

    pub fn best_val_objective(&self) -> f64 {
        self.val_objective[self.best_epoch]
    }
}

/// Paired minibatches: index blocks of `batch` positions for each class.
fn batches(n: usize, batch: usize, rng: &RandomSource) -> Vec<(Vec<usize>, Vec<usize>)> {
    use rand::seq::SliceRandom;
    let mut g = rng.rng();
    let mut ix: Vec<usize> = (0..n).collect();
    let mut iy: Vec<usize> = (0..n).collect();
    ix.shuffle(&mut g);
    iy.shuffle(&mut g);
    ix.chunks_exact(batch).zip(iy.chunks_exact(batch)).map(|(a, b)| (a.to_vec(), b.to_vec())).collect()
}

/// Maximize `Ĵ` over the kernel parameters on the training pair of `split`.
///
/// The last `validation_size(n_tr)` points of each training sample are held
/// out for validation; the remainder is shuffled into paired minibatches each
/// epoch (a ragged final batch is dropped). Training stops once `patience`
/// epochs pass without a strictly better validation objective, and the best
/// checkpoint is returned.
pub fn train_kernel(
    split: &DatasetSplit,
    init: &KernelSpec,
    cfg: &TrainConfig,
    rng: &RandomSource,
) -> Result<TrainReport> {
    cfg.validate()?;
    let (x, y) = (&split.train.x, &split.train.y);
    if x.len() != y.len() {
        return Err(Error::SizeMismatch(format!("training samples {} vs {}", x.len(), y.len())));
    }
    let n_tr = x.len();
    let n_val = validation_size(n_tr);
    if n_tr < n_val + 2 {
        return Err(Error::SampleTooSmall {
            what: "training with a validation split",
            needed: n_val + 2,
            got: n_tr,
        });
    }
    let n_fit = n_tr - n_val;
    let (x_fit, y_fit) = (x.slice(0..n_fit)?, y.slice(0..n_fit)?);
    let (x_val, y_val) = (x.slice(n_fit..n_tr)?, y.slice(n_fit..n_tr)?);
    let batch = cfg.batch_size.min(n_fit);
    let exec = cfg.exec;
    let val_of = |k: &KernelSpec| stats::objective_j_with(&x_val, &y_val, k, cfg.reg, exec);
    let epoch_batches = |epoch: usize| batches(n_fit, batch, &rng.fork(&[epoch as u64]));

    let mut kernel = init.clone();
    let mut train_obj = Vec::new();
    let mut val_obj = Vec::new();
    let mut init_values = Vec::new();
    for (bx, by) in epoch_batches(1) {
        init_values.push(stats::objective_j_with(&x_fit.select(&bx)?, &y_fit.select(&by)?, &kernel, cfg.reg, exec)?);
    }
    train_obj.push(pairwise_sum(&init_values) / init_values.len() as f64);
    val_obj.push(val_of(&kernel)?);
    let mut best = (0usize, val_obj[0], kernel.clone());
    let mut params = kernel.params();
    let mut adam = AdamState::new(params.len());
    let mut stale = 0usize;
    let mut epochs_run = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut values = Vec::new();
        for (bx, by) in epoch_batches(epoch) {
            let og = grad_objective_with(&kernel, &x_fit.select(&bx)?, &y_fit.select(&by)?, cfg.reg, exec)?;
            values.push(og.value);
            adam_step(&mut params, &og.grad, &mut adam, cfg);
            kernel.set_params(&params);
        }
        epochs_run = epoch;
        train_obj.push(pairwise_sum(&values) / values.len() as f64);
        let v = val_of(&kernel)?;
        val_obj.push(v);
        log::debug!("epoch {epoch}: train {:.6} validation {v:.6}", train_obj[epoch]);
        if v > best.1 {
            best = (epoch, v, kernel.clone());
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= cfg.patience {
            break;
        }
    }
    Ok(TrainReport {
        epochs_run,
        train_objective: train_obj,
        val_objective: val_obj,
        best_epoch: best.0,
        kernel: best.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitSizes;
    use rand::Rng;

    fn blobs(seed: u64, n: usize, dim: usize, shift: f64) -> Sample {
        let mut g = RandomSource::new(seed).rng();
        Sample::real(dim, (0..n * dim).map(|_| g.random_range(-1.0..1.0) + shift).collect()).unwrap()
    }

    fn finite_difference_error(kernel: &KernelSpec, x: &Sample, y: &Sample) -> f64 {
        let og = grad_objective(kernel, x, y, DEFAULT_REG).unwrap();
        let p0 = kernel.params();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..p0.len() {
            let at = |d: f64| {
                let mut k = kernel.clone();
                let mut p = p0.clone();
                p[i] += d;
                k.set_params(&p);
                stats::objective_j(x, y, &k, DEFAULT_REG).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let a = og.grad[i];
            if a.abs().max(fd.abs()) < 1e-6 {
                continue;
            }
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()));
        }
        worst
    }

    #[test]
    fn gradient_value_matches_objective() {
        let x = blobs(1, 8, 2, 0.0);
        let y = blobs(2, 8, 2, 0.5);
        let k = KernelSpec::deep_o(0.7);
        let og = grad_objective(&k, &x, &y, DEFAULT_REG).unwrap();
        assert!((og.value - stats::objective_j(&x, &y, &k, DEFAULT_REG).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = blobs(3, 8, 2, 0.0);
        let y = blobs(4, 8, 2, 0.4);
        let mut g = RandomSource::new(5).rng();
        let phi = FeatureNet::random(&[2, 8, 8, 8, 3], &mut g).unwrap();
        let phip = FeatureNet::random(&[2, 8, 8, 8, 2], &mut g).unwrap();
        let kernels = [
            KernelSpec::deep_o(0.8),
            KernelSpec::deep_g(phi.clone(), 0.9),
            KernelSpec::deep_m(phi, phip, 0.9, 1.1, 0.3).unwrap(),
        ];
        for k in &kernels {
            let err = finite_difference_error(k, &x, &y);
            assert!(err < 1e-4, "{}: {err}", k.type_name());
        }
    }

    #[test]
    fn fixed_kernels_have_empty_gradients() {
        let x = blobs(6, 5, 1, 0.0);
        let y = blobs(7, 5, 1, 1.0);
        let og = grad_objective(&KernelSpec::product(|_| 1.5), &x, &y, DEFAULT_REG).unwrap();
        assert!(og.grad.is_empty());
    }

    #[test]
    fn adam_first_step_and_fixed_point() {
        let cfg = TrainConfig {
            learning_rate: 0.01,
            ..Default::default()
        };
        let mut p = vec![1.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[0.0], &mut st, &cfg);
        assert_eq!(p[0], 1.0);
        let mut p = vec![1.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[0.5], &mut st, &cfg);
        // m̂ = 0.5, v̂ = 0.25, so the step is lr · 0.5 / (0.5 + eps).
        assert!((p[0] - (1.0 + 0.01 * 0.5 / (0.5 + 1e-8))).abs() < 1e-15);
        let mut last = p[0];
        let mut step = 0.0;
        for _ in 0..1000 {
            adam_step(&mut p, &[0.5], &mut st, &cfg);
            step = p[0] - last;
            last = p[0];
        }
        assert!((step / 0.01 - 1.0).abs() < 0.01);
    }

    #[test]
    fn validation_rule() {
        assert_eq!(validation_size(1000), 100);
        assert_eq!(validation_size(10_000), 316);
        assert_eq!(validation_size(5), 2);
    }

    fn toy_split(seed: u64, n: usize) -> DatasetSplit {
        let x = blobs(seed, n, 1, -1.0);
        let y = blobs(seed + 1000, n, 1, 1.0);
        let x = Sample::scalars((0..n).map(|i| 0.3 * x.real_point(i)[0] - 1.0).collect()).unwrap();
        let y = Sample::scalars((0..n).map(|i| 0.3 * y.real_point(i)[0] + 1.0).collect()).unwrap();
        DatasetSplit::carve(
            &x,
            &y,
            SplitSizes {
                n_tr: n,
                n_ev: n,
                n_cal: 0,
                n_opt: 0,
                eval_within_train: true,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let split = toy_split(1, 60);
        let init = KernelSpec::deep_o(3.0);
        let cfg = TrainConfig {
            max_epochs: 0,
            batch_size: 16,
            ..Default::default()
        };
        let r = train_kernel(&split, &init, &cfg, &RandomSource::new(1)).unwrap();
        assert_eq!(r.epochs_run, 0);
        assert_eq!(r.best_epoch, 0);
        assert_eq!(r.kernel.params(), init.params());
    }

    #[test]
    fn training_is_deterministic_and_tracks_best_epoch() {
        let split = toy_split(2, 80);
        let mut g = RandomSource::new(9).rng();
        let phi = FeatureNet::random(&[1, 8, 2], &mut g).unwrap();
        let init = KernelSpec::deep_g(phi, 1.0);
        let cfg = TrainConfig {
            max_epochs: 15,
            batch_size: 16,
            learning_rate: 0.01,
            patience: 4,
            ..Default::default()
        };
        let a = train_kernel(&split, &init, &cfg, &RandomSource::new(4)).unwrap();
        let b = train_kernel(&split, &init, &cfg, &RandomSource::new(4)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.kernel.params(), b.kernel.params());
        assert!(a.val_objective.iter().all(|v| *v <= a.best_val_objective()));
        assert!(a.val_objective.len() == a.epochs_run + 1);
    }
}
