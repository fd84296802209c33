use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mlfht::data::{read_dataset, subsample_without_replacement, write_atomic, DatasetSplit, Sample, Space, SplitSizes};
use mlfht::experiments::{self, make_toy, DEFAULT_GRID, DEFAULT_TRIALS};
use mlfht::inference::{
    calibrate_null_with, estimate_p_value, optimize_threshold, psi_test, significance_binomial,
    significance_gaussian, CalibrationOptions, CalibrationTable, ThresholdedCalibration,
};
use mlfht::kernels::{eigendecompose, median_heuristic, parse_kernel, write_kernel_text, KernelSpec};
use mlfht::stats::{t_statistic, WitnessModel};
use mlfht::theory::{jstar_lower_bound, lambda_norms, lower_bound, upper_bound, ProblemParams};
use mlfht::training::{init_kernel, train_kernel, Architecture, TrainConfig};
use mlfht::{Execution, RandomSource};

use crate::config::RunConfig;
use crate::{BoundsArgs, KernelArgs, PvalueArgs, SweepArgs, TestArgs, TrainArgs};

/// Values shared by every subcommand after merging flags and config.
pub struct Run {
    pub cfg: RunConfig,
    pub seed: u64,
}

fn required(flag: Option<PathBuf>, file: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| anyhow!("missing {what}: pass --{what} or set io.{what} in the config"))
}

fn load(path: &Path) -> Result<Sample> {
    read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

/// Kernel from `--kernel`, the config file, or a default for the data type:
/// the indicator kernel for categorical data and a median-heuristic Gaussian
/// for real data.
fn resolve_kernel(args: &KernelArgs, ctx: &Run, data: &[&Sample]) -> Result<KernelSpec> {
    let block = &ctx.cfg.kernel;
    if let Some(path) = args.kernel.clone().or_else(|| block.path.clone()) {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading kernel {}", path.display()))?;
        return parse_kernel(&text).with_context(|| format!("parsing kernel {}", path.display()));
    }
    let space = data.first().map(|s| s.space());
    let kind = args.kind.clone().or_else(|| block.kind.clone()).unwrap_or_else(|| match space {
        Some(Space::Real { .. }) => "gaussian".into(),
        _ => "identity".into(),
    });
    match kind.as_str() {
        "identity" => {
            let k = args.k.or(block.k).or(match space {
                Some(Space::Categorical { k }) => Some(k),
                _ => None,
            });
            let k = k.ok_or_else(|| anyhow!("the identity kernel needs --k"))?;
            Ok(KernelSpec::DiscreteIdentity { k })
        }
        "gaussian" => {
            let normalized = block.normalized.unwrap_or(false);
            if let Some(sigma) = args.sigma.or(block.sigma) {
                return Ok(KernelSpec::Gaussian { sigma, normalized });
            }
            let (x, y) = match data {
                [x, y, ..] => (*x, *y),
                _ => bail!("the Gaussian kernel needs --sigma when no data is available for the median heuristic"),
            };
            let src = RandomSource::with_stream(ctx.seed, 7);
            let xs = subsample_without_replacement(x, x.len().min(256), &src.fork(&[0]))?;
            let ys = subsample_without_replacement(y, y.len().min(256), &src.fork(&[1]))?;
            let sigma = median_heuristic(&xs, &ys)?;
            log::info!("median-heuristic bandwidth {sigma}");
            Ok(KernelSpec::Gaussian { sigma, normalized })
        }
        other => bail!("unknown kernel kind {other:?} (identity, gaussian)"),
    }
}

fn header(out: &mut String, command: &str, seed: u64) {
    let _ = writeln!(out, "# mlfht {command} seed={seed}");
}

pub fn test(args: TestArgs, ctx: &Run) -> Result<String> {
    let io = &ctx.cfg.io;
    let t = &ctx.cfg.test;
    let x = load(&required(args.x, &io.x, "x")?)?;
    let y = load(&required(args.y, &io.y, "y")?)?;
    let z = load(&required(args.z, &io.z, "z")?)?;
    let pi = args.pi.or(t.pi).unwrap_or(0.5);
    let k_cal = args.k_cal.or(t.k_cal).unwrap_or(1000);
    let n_opt = args.n_opt.or(t.n_opt).unwrap_or(0);
    let pool = x.len().min(y.len());
    let n_ev = args.n_ev.or(t.n_ev).unwrap_or(pool / 2);
    let n_cal = match args.n_cal.or(t.n_cal) {
        Some(n) => n,
        None => pool
            .checked_sub(n_ev + n_opt)
            .filter(|n| *n > 0)
            .ok_or_else(|| anyhow!("no data left for calibration after {n_ev} evaluation and {n_opt} threshold points"))?,
    };
    let significance = args.significance || t.significance.unwrap_or(false);
    let allow_overlap = args.allow_overlap || t.allow_overlap.unwrap_or(false);
    let split = DatasetSplit::carve(
        &x,
        &y,
        SplitSizes {
            n_tr: 0,
            n_ev,
            n_cal,
            n_opt,
            eval_within_train: false,
        },
    )?;
    let (x_ev, y_ev) = (&split.eval.x, &split.eval.y);
    let kernel = resolve_kernel(&args.kernel, ctx, &[x_ev, y_ev])?;
    let m = z.len();

    let decision = psi_test(x_ev, y_ev, &z, pi, &kernel)?;
    let opts = CalibrationOptions {
        y_cal: Some(&split.cal.y),
        strict: !allow_overlap,
        exec: Execution::Parallel,
    };
    let src = RandomSource::new(ctx.seed);
    let table = calibrate_null_with(&split.cal.x, x_ev, y_ev, m, k_cal, &kernel, &src.fork(&[1]), &opts)?;
    if let Some(cache) = args.cache.or_else(|| io.cache.clone()) {
        table.write(&cache).with_context(|| format!("writing calibration table {}", cache.display()))?;
        log::info!("calibration table written to {}", cache.display());
    }

    let mut out = String::new();
    header(&mut out, "test", ctx.seed);
    let _ = writeln!(out, "kernel={}", kernel.type_name());
    let _ = writeln!(out, "n_ev={n_ev}\nn_cal={n_cal}\nm={m}\nk_cal={k_cal}\npi={pi}");
    let _ = writeln!(out, "statistic={:?}\nthreshold={:?}", decision.statistic, decision.threshold);
    let _ = writeln!(out, "decision={}", if decision.reject { "reject" } else { "accept" });
    let _ = writeln!(out, "p_value={:?}", estimate_p_value(decision.statistic, &table, false));
    let _ = writeln!(out, "p_value_smoothed={:?}", estimate_p_value(decision.statistic, &table, true));
    if significance {
        match significance_gaussian(decision.statistic, m, &table) {
            Ok(s) => {
                let _ = writeln!(out, "significance_gaussian={s:?}");
            }
            Err(e) => {
                log::warn!("Gaussian significance unavailable: {e}");
                let _ = writeln!(out, "significance_gaussian=nan");
            }
        }
        match &split.opt {
            Some(opt) => {
                let choice = optimize_threshold(&opt.x, &opt.y, x_ev, y_ev, &kernel)?;
                let model = WitnessModel::new(&kernel, x_ev, y_ev)?;
                let sx = model.scores(&split.cal.x, Execution::Parallel)?;
                let sy = model.scores(&split.cal.y, Execution::Parallel)?;
                let cal = ThresholdedCalibration::from_scores(choice.t, &sx, Some(&sy))?;
                let count = cal.count(&model.scores(&z, Execution::Parallel)?);
                let _ = writeln!(out, "threshold_t={:?}\nthreshold_count={count}\ntheta0_thresholded={:?}", choice.t, cal.theta0);
                match significance_binomial(count, m as u64, cal.theta0) {
                    Ok(s) => {
                        let _ = writeln!(out, "significance_binomial={:?}\nsignificance_binomial_saturated={}", s.value, s.saturated);
                    }
                    Err(e) => {
                        log::warn!("binomial significance unavailable: {e}");
                        let _ = writeln!(out, "significance_binomial=nan");
                    }
                }
            }
            None => log::warn!("binomial significance needs --n-opt > 0; skipped"),
        }
    }
    Ok(out)
}

pub fn train(args: TrainArgs, ctx: &Run) -> Result<String> {
    let io = &ctx.cfg.io;
    let tb = &ctx.cfg.train;
    let x = load(&required(args.x, &io.x, "x")?)?;
    let y = load(&required(args.y, &io.y, "y")?)?;
    if x.is_empty() || y.is_empty() {
        bail!("training needs data from both classes");
    }
    if x.to_points() == y.to_points() {
        bail!("both classes contain identical data; there is nothing to separate");
    }
    let arch: Architecture = args
        .arch
        .or_else(|| tb.arch.clone())
        .unwrap_or_else(|| "deep_g".into())
        .parse()?;
    let hidden = args
        .hidden
        .or_else(|| tb.hidden.clone())
        .or_else(|| ctx.cfg.kernel.layers.clone())
        .unwrap_or_else(|| vec![32, 32, 32]);
    let feature_dim = args.feature_dim.or(tb.feature_dim).unwrap_or(8);
    let n_tr = args.n_tr.or(tb.n_tr).unwrap_or(x.len().min(y.len()));
    let cfg = TrainConfig {
        learning_rate: args.learning_rate.or(tb.learning_rate).unwrap_or(1e-3),
        batch_size: args.batch_size.or(tb.batch_size).unwrap_or(128),
        max_epochs: args.max_epochs.or(tb.max_epochs).unwrap_or(100),
        patience: args.patience.or(tb.patience).unwrap_or(10),
        seed: ctx.seed,
        exec: Execution::Parallel,
        ..TrainConfig::default()
    };
    let split = DatasetSplit::carve(
        &x,
        &y,
        SplitSizes {
            n_tr,
            n_ev: 0,
            n_cal: 0,
            n_opt: 0,
            eval_within_train: false,
        },
    )?;
    let src = RandomSource::new(ctx.seed);
    let mut init = init_kernel(arch, &hidden, feature_dim, &split.train.x, &split.train.y, &src.fork(&[0]))?;
    if let (Some(tau), KernelSpec::DeepM { phi, phi_prime, log_sigma, log_sigma0, .. }) = (ctx.cfg.kernel.tau, &init) {
        init = KernelSpec::deep_m(phi.clone(), phi_prime.clone(), log_sigma.exp(), log_sigma0.exp(), tau)?;
    }
    let report = train_kernel(&split, &init, &cfg, &src.fork(&[1]))?;
    let kernel_out = args.out.or_else(|| io.kernel_out.clone()).unwrap_or_else(|| "kernel.txt".into());
    let report_out = args.report.or_else(|| io.report_out.clone()).unwrap_or_else(|| "train_report.csv".into());
    write_out(&kernel_out, &write_kernel_text(&report.kernel)?)?;
    write_out(&report_out, &report.to_csv())?;

    let mut out = String::new();
    header(&mut out, "train", ctx.seed);
    let _ = writeln!(out, "arch={}\nepochs_run={}\nbest_epoch={}", report.kernel.type_name(), report.epochs_run, report.best_epoch);
    let _ = writeln!(out, "initial_val_objective={:?}", report.val_objective[0]);
    let _ = writeln!(out, "best_val_objective={:?}", report.best_val_objective());
    let _ = writeln!(out, "kernel={}\nreport={}", kernel_out.display(), report_out.display());
    Ok(out)
}

pub fn sweep(args: SweepArgs, ctx: &Run) -> Result<String> {
    let e = &ctx.cfg.experiment;
    let io = &ctx.cfg.io;
    let k = args.k.or(e.k).unwrap_or(100);
    let epsilon = args.epsilon.or(e.epsilon).unwrap_or(0.3);
    let m_grid = args.m_grid.or_else(|| e.m_grid.clone()).unwrap_or_else(|| DEFAULT_GRID.to_vec());
    let n_grid = args.n_grid.or_else(|| e.n_grid.clone()).unwrap_or_else(|| DEFAULT_GRID.to_vec());
    let trials = args.trials.or(e.trials).unwrap_or(DEFAULT_TRIALS);
    let pi = args.pi.or(e.pi).unwrap_or(0.5);
    let level = args.level.or(e.level).unwrap_or(0.1);
    if trials < 100 {
        bail!("trials = {trials} must be at least 100");
    }
    if !(level > 0.0 && level < 1.0) {
        bail!("level = {level} lies outside (0, 1)");
    }
    let toy = make_toy(k, epsilon)?;
    let grid = experiments::tradeoff_sweep(
        &toy,
        &m_grid,
        &n_grid,
        trials,
        pi,
        &RandomSource::new(ctx.seed),
        Execution::Parallel,
    )?;
    let contour = experiments::extract_contour(&grid, level)?;
    let grid_out = args.grid_out.or_else(|| io.grid_out.clone()).unwrap_or_else(|| "grid.csv".into());
    let contour_out = args.contour_out.or_else(|| io.contour_out.clone()).unwrap_or_else(|| "contour.csv".into());
    write_out(&grid_out, &grid.to_csv())?;
    write_out(&contour_out, &experiments::contour_to_csv(&contour))?;

    let mut out = String::new();
    header(&mut out, "sweep", ctx.seed);
    let _ = writeln!(out, "k={k}\nepsilon={epsilon}\ntrials={trials}\npi={pi}\nlevel={level}");
    let _ = writeln!(out, "grid={}\ncontour={}\ncontour_points={}", grid_out.display(), contour_out.display(), contour.len());
    Ok(out)
}

/// The finite-support spectrum behind `bounds` and `spectrum`.
fn spectrum_of(args: &KernelArgs, support: Option<PathBuf>, ctx: &Run) -> Result<mlfht::kernels::SpectralDecomposition> {
    let support_path = support.or_else(|| ctx.cfg.io.support.clone());
    let support = match &support_path {
        Some(p) => Some(load(p)?),
        None => None,
    };
    let kernel = resolve_kernel(args, ctx, &[])?;
    let support = match (support, &kernel) {
        (Some(s), _) => s,
        (None, KernelSpec::DiscreteIdentity { k }) => Sample::categorical(*k, (1..=*k).collect())?,
        (None, other) => bail!(
            "the {} kernel acts on a continuous space; pass --support with a finite set of points",
            other.type_name()
        ),
    };
    let mu = vec![1.0 / support.len() as f64; support.len()];
    Ok(eigendecompose(&kernel, &support, &mu)?)
}

pub fn bounds(args: BoundsArgs, ctx: &Run) -> Result<String> {
    let b = &ctx.cfg.bounds;
    let p = ProblemParams {
        c: args.c.or(b.c).unwrap_or(1.0),
        epsilon: args
            .epsilon
            .or(b.epsilon)
            .ok_or_else(|| anyhow!("missing --epsilon (the separation to plan for)"))?,
        delta: args.delta.or(b.delta).unwrap_or(1.0),
        r: args.r.or(b.r).unwrap_or(0.0),
        alpha: args.alpha.or(b.alpha).unwrap_or(0.05),
        nu: args.nu.or(b.nu).unwrap_or(0.0),
    };
    p.validate()?;
    let spec = spectrum_of(&args.kernel, args.support, ctx)?;
    let j = args.j.or(b.j).unwrap_or(spec.len().max(2));
    let norms = lambda_norms(&spec, j)?;
    let up = upper_bound(&p, &spec)?;
    let low = lower_bound(&p, &spec, j)?;
    let mut out = String::new();
    let _ = writeln!(out, "# mlfht bounds ({})", up.constant_caveat);
    let _ = writeln!(
        out,
        "c={}\nepsilon={}\ndelta={}\nr={}\nalpha={}\nnu={}\nj={j}",
        p.c, p.epsilon, p.delta, p.r, p.alpha, p.nu
    );
    let _ = writeln!(out, "support_size={}", spec.support_size());
    let _ = writeln!(out, "lambda_sup={}\nlambda_l2={}\nlambda_l2j={}", round(norms.sup), round(norms.l2), round(norms.l2j));
    let _ = writeln!(out, "upper_min_m_n={}\nupper_min_n_sqrt_nm={}", round(up.min_m_n), round(up.min_n_sqrt_nm));
    let _ = writeln!(
        out,
        "lower_m_min={}\nlower_n_min={}\nlower_mixed_min={}",
        round(low.m_min),
        round(low.n_min),
        round(low.mixed_min)
    );
    let _ = writeln!(
        out,
        "row_integral_precondition={}\nrow_integral_deviation={:e}",
        low.precondition_holds, low.row_integral_deviation
    );
    let _ = writeln!(out, "jstar={}", jstar_lower_bound(&spec, p.epsilon));
    Ok(out)
}

/// Twelve significant digits, which hides eigen-solver noise in the table.
fn round(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

pub fn spectrum(args: KernelArgs, support: Option<PathBuf>, ctx: &Run) -> Result<String> {
    let spec = spectrum_of(&args, support, ctx)?;
    let mut out = String::from("j,lambda\n");
    for (j, l) in spec.eigenvalues.iter().enumerate() {
        let _ = writeln!(out, "{},{:?}", j + 1, l);
    }
    log::info!(
        "orthonormality residual {:e}, row-integral deviation {:e}",
        spec.orthonormality_residual(),
        mlfht::theory::row_integral_deviation(&spec)
    );
    Ok(out)
}

pub fn pvalue(args: PvalueArgs, ctx: &Run) -> Result<String> {
    let io = &ctx.cfg.io;
    let path = required(args.table, &io.cache, "table")?;
    let table = CalibrationTable::read(&path).with_context(|| format!("reading calibration table {}", path.display()))?;
    let statistic = match args.statistic {
        Some(s) => s,
        None => {
            let x = load(&required(args.x, &io.x, "x")?)?;
            let y = load(&required(args.y, &io.y, "y")?)?;
            let z = load(&required(args.z, &io.z, "z")?)?;
            let n_ev = args.n_ev.or(ctx.cfg.test.n_ev).unwrap_or(x.len().min(y.len()) / 2);
            let (x_ev, y_ev) = (x.slice(0..n_ev)?, y.slice(0..n_ev)?);
            let kernel = resolve_kernel(&args.kernel, ctx, &[&x_ev, &y_ev])?;
            if z.len() != table.m {
                log::warn!("Z has {} points but the table was calibrated for m = {}", z.len(), table.m);
            }
            t_statistic(&x_ev, &y_ev, &z, &kernel)?
        }
    };
    if !statistic.is_finite() {
        bail!("statistic must be finite");
    }
    let mut out = String::new();
    let _ = writeln!(out, "# mlfht pvalue table={} k={} m={}", path.display(), table.len(), table.m);
    let _ = writeln!(out, "statistic={statistic:?}");
    let _ = writeln!(out, "p_value={:?}", estimate_p_value(statistic, &table, false));
    let _ = writeln!(out, "p_value_smoothed={:?}", estimate_p_value(statistic, &table, true));
    match significance_gaussian(statistic, table.m, &table) {
        Ok(s) => {
            let _ = writeln!(out, "significance_gaussian={s:?}");
        }
        Err(e) => log::warn!("Gaussian significance unavailable: {e}"),
    }
    Ok(out)
}
