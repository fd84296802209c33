//! TOML run configuration. Every key is optional; command-line flags take
//! precedence over file values, which take precedence over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub kernel: KernelBlock,
    #[serde(default)]
    pub train: TrainBlock,
    #[serde(default)]
    pub test: TestBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub bounds: BoundsBlock,
    #[serde(default)]
    pub io: IoBlock,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    /// `identity` or `gaussian`; ignored when `path` is set.
    #[serde(rename = "type", alias = "kind")]
    pub kind: Option<String>,
    pub k: Option<u32>,
    pub sigma: Option<f64>,
    /// Use the `σ^{-d}`-prefactored Gaussian.
    pub normalized: Option<bool>,
    /// Initial mixing weight of a trained `deep_m` kernel.
    pub tau: Option<f64>,
    /// Hidden widths of trained feature networks.
    pub layers: Option<Vec<usize>>,
    /// A kernel file written by `mlfht train`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    pub arch: Option<String>,
    pub hidden: Option<Vec<usize>>,
    pub feature_dim: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub n_tr: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestBlock {
    pub pi: Option<f64>,
    pub k_cal: Option<usize>,
    pub n_ev: Option<usize>,
    pub n_cal: Option<usize>,
    pub n_opt: Option<usize>,
    pub significance: Option<bool>,
    pub allow_overlap: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub k: Option<usize>,
    pub epsilon: Option<f64>,
    pub m_grid: Option<Vec<usize>>,
    pub n_grid: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub pi: Option<f64>,
    pub level: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBlock {
    pub c: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub r: Option<f64>,
    pub alpha: Option<f64>,
    pub nu: Option<f64>,
    pub j: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoBlock {
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub z: Option<PathBuf>,
    pub support: Option<PathBuf>,
    pub kernel_out: Option<PathBuf>,
    pub report_out: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub grid_out: Option<PathBuf>,
    pub contour_out: Option<PathBuf>,
}

fn unit_interval(name: &str, v: Option<f64>, open: bool) -> Result<()> {
    if let Some(v) = v {
        let ok = if open { v > 0.0 && v < 1.0 } else { (0.0..=1.0).contains(&v) };
        if !ok {
            let range = if open { "(0, 1)" } else { "[0, 1]" };
            bail!("{name} = {v} lies outside {range}");
        }
    }
    Ok(())
}

fn positive(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(v) if !(v > 0.0 && v.is_finite()) => bail!("{name} = {v} must be positive"),
        _ => Ok(()),
    }
}

fn at_least(name: &str, v: Option<usize>, min: usize) -> Result<()> {
    match v {
        Some(v) if v < min => bail!("{name} = {v} must be at least {min}"),
        _ => Ok(()),
    }
}

fn grid(name: &str, g: &Option<Vec<usize>>) -> Result<()> {
    if let Some(g) = g {
        if g.is_empty() || g.contains(&0) || g.windows(2).any(|w| w[1] <= w[0]) {
            bail!("{name} must be a non-empty, strictly increasing list of positive sizes");
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks on everything present in the file.
    pub fn validate(&self) -> Result<()> {
        at_least("workers", self.workers, 1)?;
        if let Some(kind) = &self.kernel.kind {
            if kind != "identity" && kind != "gaussian" {
                bail!("kernel.type = {kind:?} is not one of identity, gaussian");
            }
        }
        at_least("kernel.k", self.kernel.k.map(|k| k as usize), 1)?;
        positive("kernel.sigma", self.kernel.sigma)?;
        unit_interval("kernel.tau", self.kernel.tau, true)?;
        if self.kernel.layers.as_ref().is_some_and(|h| h.contains(&0)) {
            bail!("kernel.layers widths must be positive");
        }

        let t = &self.train;
        if let Some(a) = &t.arch {
            a.parse::<mlfht::training::Architecture>()?;
        }
        if t.hidden.as_ref().is_some_and(|h| h.contains(&0)) {
            bail!("train.hidden widths must be positive");
        }
        at_least("train.feature_dim", t.feature_dim, 1)?;
        positive("train.learning_rate", t.learning_rate)?;
        at_least("train.batch_size", t.batch_size, 4)?;
        at_least("train.n_tr", t.n_tr, 2)?;

        let s = &self.test;
        unit_interval("test.pi", s.pi, false)?;
        at_least("test.k_cal", s.k_cal, 1)?;
        at_least("test.n_ev", s.n_ev, 2)?;
        at_least("test.n_cal", s.n_cal, 1)?;

        let e = &self.experiment;
        at_least("experiment.k", e.k, 1)?;
        if let Some(eps) = e.epsilon {
            if !(0.0..1.0).contains(&eps) {
                bail!("experiment.epsilon = {eps} lies outside [0, 1)");
            }
        }
        grid("experiment.m_grid", &e.m_grid)?;
        grid("experiment.n_grid", &e.n_grid)?;
        at_least("experiment.trials", e.trials, 100)?;
        unit_interval("experiment.pi", e.pi, false)?;
        unit_interval("experiment.level", e.level, true)?;

        let b = &self.bounds;
        positive("bounds.c", b.c)?;
        positive("bounds.epsilon", b.epsilon)?;
        if let Some(d) = b.delta {
            if !(d > 0.0 && d <= 1.0) {
                bail!("bounds.delta = {d} lies outside (0, 1]");
            }
        }
        if b.r.is_some_and(|r| !(r >= 0.0 && r.is_finite())) {
            bail!("bounds.r must be non-negative");
        }
        unit_interval("bounds.alpha", b.alpha, true)?;
        unit_interval("bounds.nu", b.nu, false)?;
        at_least("bounds.j", b.j, 2)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file_parses() {
        let cfg = RunConfig::parse(
            r#"
            seed = 7
            workers = 2
            [kernel]
            type = "identity"
            k = 100
            [experiment]
            m_grid = [25, 50]
            trials = 200
            [bounds]
            epsilon = 0.06
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.kernel.k, Some(100));
        assert_eq!(cfg.experiment.m_grid, Some(vec![25, 50]));
    }

    #[test]
    fn unknown_keys_and_bad_ranges_rejected() {
        assert!(RunConfig::parse("sed = 1").is_err());
        assert!(RunConfig::parse("[test]\nppi = 0.5").is_err());
        assert!(RunConfig::parse("[experiment]\ntrials = 0").is_err());
        assert!(RunConfig::parse("[bounds]\nepsilon = 0.0").is_err());
        assert!(RunConfig::parse("[test]\npi = 1.5").is_err());
        assert!(RunConfig::parse("[experiment]\nm_grid = [50, 25]").is_err());
        assert!(RunConfig::parse("[train]\narch = \"deep_x\"").is_err());
        assert!(RunConfig::parse("[kernel]\ntau = 1.0").is_err());
        assert!(RunConfig::parse("[kernel]\nkind = \"gaussian\"\nnormalized = true").is_ok());
        assert!(RunConfig::parse("").is_ok());
    }
}
