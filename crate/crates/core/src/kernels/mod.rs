//! Kernel definitions, Gram evaluation, finite-support spectra and the
//! trainable deep-kernel architectures.
//!
//! All Gaussian factors use `exp(-|x - y|^2 / sigma^2)`. The optional
//! `sigma^-d` prefactor of [`KernelSpec::Gaussian`] only rescales every
//! statistic, which leaves the test decision unchanged.
//!
//! Trainable bandwidths are stored as logarithms and the mixing weight `tau`
//! of the mixing architecture as a logistic preimage, so that the trainable
//! parameter vector is unconstrained.

mod io;
mod net;
mod spectral;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::data::{PointRef, Sample, Space};
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;

pub use io::{parse_kernel, write_kernel_text};
pub use net::{FeatureNet, Layer};
pub use spectral::{eigendecompose, SpectralDecomposition};

pub(crate) use net::Trace;

/// Scalar witness `f` of a product kernel `K(x, y) = f(x) f(y)`.
#[derive(Clone)]
pub struct Witness(Arc<dyn Fn(PointRef<'_>) -> f64 + Send + Sync>);

impl Witness {
    pub fn new(f: impl Fn(PointRef<'_>) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn value(&self, p: PointRef<'_>) -> f64 {
        (self.0)(p)
    }
}

impl fmt::Debug for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Witness(..)")
    }
}

/// The closed family of supported kernels.
#[derive(Clone, Debug)]
pub enum KernelSpec {
    /// `K(x, y) = 1{x = y}` on categories `1..=k`.
    DiscreteIdentity { k: u32 },
    /// Fixed-bandwidth Gaussian on real vectors.
    Gaussian { sigma: f64, normalized: bool },
    /// Rank-one kernel `f(x) f(y)`.
    ProductWitness(Witness),
    /// Gaussian with a trainable bandwidth.
    DeepO { log_sigma: f64 },
    /// Gaussian on learned features `phi(x)`.
    DeepG { phi: FeatureNet, log_sigma: f64 },
    /// Mixing architecture
    /// `[(1 - tau) G_sigma(phi(x), phi(y)) + tau] * G_sigma0(x + phi'(x), y + phi'(y))`.
    DeepM {
        phi: FeatureNet,
        phi_prime: FeatureNet,
        log_sigma: f64,
        log_sigma0: f64,
        logit_tau: f64,
    },
    /// `factor * inner`, for positive `factor`.
    Scaled { factor: f64, inner: Box<KernelSpec> },
}

pub fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Per-point representation a kernel is evaluated on.
#[derive(Clone, Debug)]
pub(crate) enum Embedded {
    Categories(Vec<u32>),
    Vectors { dim: usize, data: Vec<f64> },
    Scalars(Vec<f64>),
    /// Two vector blocks per point (feature map and shifted input).
    Pairs {
        dim_a: usize,
        a: Vec<f64>,
        dim_b: usize,
        b: Vec<f64>,
    },
}

impl Embedded {
    pub(crate) fn len(&self) -> usize {
        match self {
            Embedded::Categories(c) => c.len(),
            Embedded::Vectors { dim, data } => data.len() / dim,
            Embedded::Scalars(s) => s.len(),
            Embedded::Pairs { dim_a, a, .. } => a.len() / dim_a,
        }
    }

    pub(crate) fn vector(&self, i: usize) -> &[f64] {
        match self {
            Embedded::Vectors { dim, data } => &data[i * dim..(i + 1) * dim],
            _ => unreachable!("vector() on a non-vector embedding"),
        }
    }

    pub(crate) fn pair(&self, i: usize) -> (&[f64], &[f64]) {
        match self {
            Embedded::Pairs { dim_a, a, dim_b, b } => {
                (&a[i * dim_a..(i + 1) * dim_a], &b[i * dim_b..(i + 1) * dim_b])
            }
            _ => unreachable!("pair() on a non-pair embedding"),
        }
    }
}

/// Kernel constants resolved once per statistic evaluation.
#[derive(Clone, Debug)]
pub(crate) enum Evaluator {
    Indicator,
    Gauss { inv_s2: f64, prefactor: f64 },
    Product,
    Mixed { inv_s2: f64, inv_s02: f64, tau: f64 },
    Scaled { factor: f64, inner: Box<Evaluator> },
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Evaluator {
    #[inline]
    pub(crate) fn value(&self, a: &Embedded, i: usize, b: &Embedded, j: usize) -> f64 {
        match (self, a, b) {
            (Evaluator::Indicator, Embedded::Categories(ca), Embedded::Categories(cb)) => {
                if ca[i] == cb[j] {
                    1.0
                } else {
                    0.0
                }
            }
            (Evaluator::Gauss { inv_s2, prefactor }, _, _) => {
                prefactor * (-sq_dist(a.vector(i), b.vector(j)) * inv_s2).exp()
            }
            (Evaluator::Product, Embedded::Scalars(fa), Embedded::Scalars(fb)) => fa[i] * fb[j],
            (Evaluator::Mixed { inv_s2, inv_s02, tau }, _, _) => {
                let (fa, sa) = a.pair(i);
                let (fb, sb) = b.pair(j);
                let g = (-sq_dist(fa, fb) * inv_s2).exp();
                let g0 = (-sq_dist(sa, sb) * inv_s02).exp();
                ((1.0 - tau) * g + tau) * g0
            }
            (Evaluator::Scaled { factor, inner }, _, _) => factor * inner.value(a, i, b, j),
            _ => unreachable!("embedding does not match kernel"),
        }
    }
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Self {
        KernelSpec::Gaussian {
            sigma,
            normalized: false,
        }
    }

    pub fn deep_o(sigma: f64) -> Self {
        KernelSpec::DeepO {
            log_sigma: sigma.ln(),
        }
    }

    pub fn deep_g(phi: FeatureNet, sigma: f64) -> Self {
        KernelSpec::DeepG {
            phi,
            log_sigma: sigma.ln(),
        }
    }

    pub fn deep_m(phi: FeatureNet, phi_prime: FeatureNet, sigma: f64, sigma0: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(invalid(format!("tau {tau} outside (0, 1)")));
        }
        if phi_prime.output_dim() != phi_prime.input_dim() || phi.input_dim() != phi_prime.input_dim() {
            return Err(invalid(
                "mixing kernel needs phi' : R^d -> R^d and phi defined on the same R^d",
            ));
        }
        Ok(KernelSpec::DeepM {
            phi,
            phi_prime,
            log_sigma: sigma.ln(),
            log_sigma0: sigma0.ln(),
            logit_tau: logit(tau),
        })
    }

    pub fn product(f: impl Fn(PointRef<'_>) -> f64 + Send + Sync + 'static) -> Self {
        KernelSpec::ProductWitness(Witness::new(f))
    }

    pub fn scaled(self, factor: f64) -> Self {
        KernelSpec::Scaled {
            factor,
            inner: Box::new(self),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match self {
            KernelSpec::DiscreteIdentity { k } if *k == 0 => Err(invalid("support size k must be >= 1")),
            KernelSpec::Gaussian { sigma, .. } => positive("sigma", *sigma),
            KernelSpec::DeepO { log_sigma } | KernelSpec::DeepG { log_sigma, .. } => {
                positive("sigma", log_sigma.exp())
            }
            KernelSpec::DeepM {
                log_sigma,
                log_sigma0,
                logit_tau,
                ..
            } => {
                positive("sigma", log_sigma.exp())?;
                positive("sigma0", log_sigma0.exp())?;
                if logit_tau.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("tau must lie strictly inside (0, 1)"))
                }
            }
            KernelSpec::Scaled { factor, inner } => {
                positive("scale factor", *factor)?;
                inner.validate()
            }
            _ => Ok(()),
        }
    }

    /// Short architecture name used by the config and serialization formats.
    pub fn type_name(&self) -> &'static str {
        match self {
            KernelSpec::DiscreteIdentity { .. } => "identity",
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::ProductWitness(_) => "product",
            KernelSpec::DeepO { .. } => "deep_o",
            KernelSpec::DeepG { .. } => "deep_g",
            KernelSpec::DeepM { .. } => "deep_m",
            KernelSpec::Scaled { .. } => "scaled",
        }
    }

    pub(crate) fn evaluator(&self, dim: usize) -> Evaluator {
        match self {
            KernelSpec::DiscreteIdentity { .. } => Evaluator::Indicator,
            KernelSpec::Gaussian { sigma, normalized } => Evaluator::Gauss {
                inv_s2: 1.0 / (sigma * sigma),
                prefactor: if *normalized { sigma.powi(-(dim as i32)) } else { 1.0 },
            },
            KernelSpec::DeepO { log_sigma } | KernelSpec::DeepG { log_sigma, .. } => Evaluator::Gauss {
                inv_s2: (-2.0 * log_sigma).exp(),
                prefactor: 1.0,
            },
            KernelSpec::ProductWitness(_) => Evaluator::Product,
            KernelSpec::DeepM {
                log_sigma,
                log_sigma0,
                logit_tau,
                ..
            } => Evaluator::Mixed {
                inv_s2: (-2.0 * log_sigma).exp(),
                inv_s02: (-2.0 * log_sigma0).exp(),
                tau: logistic(*logit_tau),
            },
            KernelSpec::Scaled { factor, inner } => Evaluator::Scaled {
                factor: *factor,
                inner: Box::new(inner.evaluator(dim)),
            },
        }
    }

    /// Check that the kernel can be evaluated on points of `space`.
    pub fn check_space(&self, space: Space) -> Result<()> {
        match (self, space) {
            (KernelSpec::DiscreteIdentity { k }, Space::Categorical { k: sk }) => {
                if sk > *k {
                    Err(Error::IncompatiblePoints(format!(
                        "categories up to {sk} exceed kernel support {k}"
                    )))
                } else {
                    Ok(())
                }
            }
            (KernelSpec::Gaussian { .. } | KernelSpec::DeepO { .. }, Space::Real { .. }) => Ok(()),
            (KernelSpec::DeepG { phi, .. } | KernelSpec::DeepM { phi, .. }, Space::Real { dim }) => {
                if phi.input_dim() == dim {
                    Ok(())
                } else {
                    Err(Error::IncompatiblePoints(format!(
                        "network expects dimension {}, data has {dim}",
                        phi.input_dim()
                    )))
                }
            }
            (KernelSpec::ProductWitness(_), _) => Ok(()),
            (KernelSpec::Scaled { inner, .. }, s) => inner.check_space(s),
            (k, s) => Err(Error::IncompatiblePoints(format!(
                "{} kernel cannot evaluate points of {s:?}",
                k.type_name()
            ))),
        }
    }

    pub(crate) fn embed(&self, s: &Sample) -> Result<Embedded> {
        self.check_space(s.space())?;
        Ok(match self {
            KernelSpec::DiscreteIdentity { .. } => Embedded::Categories(
                s.iter()
                    .map(|p| match p {
                        PointRef::Categorical(c) => c,
                        PointRef::Real(_) => unreachable!(),
                    })
                    .collect(),
            ),
            KernelSpec::Gaussian { .. } | KernelSpec::DeepO { .. } => {
                let dim = match s.space() {
                    Space::Real { dim } => dim,
                    Space::Categorical { .. } => unreachable!(),
                };
                let mut data = Vec::with_capacity(s.len() * dim);
                for i in 0..s.len() {
                    data.extend_from_slice(s.real_point(i));
                }
                Embedded::Vectors { dim, data }
            }
            KernelSpec::DeepG { phi, .. } => {
                let dim = phi.output_dim();
                let mut data = Vec::with_capacity(s.len() * dim);
                for i in 0..s.len() {
                    data.extend(phi.forward(s.real_point(i)));
                }
                Embedded::Vectors { dim, data }
            }
            KernelSpec::DeepM { phi, phi_prime, .. } => {
                let (dim_a, dim_b) = (phi.output_dim(), phi_prime.output_dim());
                let mut a = Vec::with_capacity(s.len() * dim_a);
                let mut b = Vec::with_capacity(s.len() * dim_b);
                for i in 0..s.len() {
                    let x = s.real_point(i);
                    a.extend(phi.forward(x));
                    b.extend(phi_prime.forward(x).iter().zip(x).map(|(f, xi)| f + xi));
                }
                Embedded::Pairs { dim_a, a, dim_b, b }
            }
            KernelSpec::ProductWitness(f) => Embedded::Scalars(s.iter().map(|p| f.value(p)).collect()),
            KernelSpec::Scaled { inner, .. } => inner.embed(s)?,
        })
    }

    /// Embed a sample and resolve the kernel constants for it.
    pub(crate) fn prepare(&self, s: &Sample) -> Result<(Evaluator, Embedded)> {
        let dim = match s.space() {
            Space::Real { dim } => dim,
            Space::Categorical { .. } => 1,
        };
        Ok((self.evaluator(dim), self.embed(s)?))
    }

    /// Number of trainable parameters (zero for fixed kernels).
    pub fn num_params(&self) -> usize {
        match self {
            KernelSpec::DeepO { .. } => 1,
            KernelSpec::DeepG { phi, .. } => 1 + phi.num_params(),
            KernelSpec::DeepM { phi, phi_prime, .. } => 3 + phi.num_params() + phi_prime.num_params(),
            _ => 0,
        }
    }

    /// Trainable parameters in the canonical order: log-bandwidths, logit of
    /// `tau`, then network weights (`phi` before `phi'`).
    pub fn params(&self) -> Vec<f64> {
        match self {
            KernelSpec::DeepO { log_sigma } => vec![*log_sigma],
            KernelSpec::DeepG { phi, log_sigma } => {
                let mut p = vec![*log_sigma];
                p.extend(phi.params());
                p
            }
            KernelSpec::DeepM {
                phi,
                phi_prime,
                log_sigma,
                log_sigma0,
                logit_tau,
            } => {
                let mut p = vec![*log_sigma, *log_sigma0, *logit_tau];
                p.extend(phi.params());
                p.extend(phi_prime.params());
                p
            }
            _ => Vec::new(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params(), "parameter vector length");
        match self {
            KernelSpec::DeepO { log_sigma } => *log_sigma = p[0],
            KernelSpec::DeepG { phi, log_sigma } => {
                *log_sigma = p[0];
                phi.set_params(&p[1..]);
            }
            KernelSpec::DeepM {
                phi,
                phi_prime,
                log_sigma,
                log_sigma0,
                logit_tau,
            } => {
                *log_sigma = p[0];
                *log_sigma0 = p[1];
                *logit_tau = p[2];
                let np = phi.num_params();
                phi.set_params(&p[3..3 + np]);
                phi_prime.set_params(&p[3 + np..]);
            }
            _ => {}
        }
    }
}

/// `K(x, y)` for a single pair of points.
pub fn eval(kernel: &KernelSpec, x: PointRef<'_>, y: PointRef<'_>) -> Result<f64> {
    let gauss = |inv_s2: f64, a: &[f64], b: &[f64]| (-sq_dist(a, b) * inv_s2).exp();
    let reals = |kind: &str| -> Result<(&[f64], &[f64])> {
        match (x, y) {
            (PointRef::Real(a), PointRef::Real(b)) if a.len() == b.len() => Ok((a, b)),
            (PointRef::Real(a), PointRef::Real(b)) => Err(Error::IncompatiblePoints(format!(
                "dimensions {} and {} differ",
                a.len(),
                b.len()
            ))),
            _ => Err(Error::IncompatiblePoints(format!("{kind} kernel needs real points"))),
        }
    };
    match kernel {
        KernelSpec::DiscreteIdentity { k } => match (x, y) {
            (PointRef::Categorical(a), PointRef::Categorical(b)) if a >= 1 && b >= 1 && a <= *k && b <= *k => {
                Ok(if a == b { 1.0 } else { 0.0 })
            }
            _ => Err(Error::IncompatiblePoints(format!(
                "identity kernel needs categories in 1..={k}"
            ))),
        },
        KernelSpec::Gaussian { sigma, normalized } => {
            let (a, b) = reals("gaussian")?;
            let pre = if *normalized { sigma.powi(-(a.len() as i32)) } else { 1.0 };
            Ok(pre * gauss(1.0 / (sigma * sigma), a, b))
        }
        KernelSpec::DeepO { log_sigma } => {
            let (a, b) = reals("deep_o")?;
            Ok(gauss((-2.0 * log_sigma).exp(), a, b))
        }
        KernelSpec::DeepG { phi, log_sigma } => {
            let (a, b) = reals("deep_g")?;
            if a.len() != phi.input_dim() {
                return Err(Error::IncompatiblePoints("dimension does not match network".into()));
            }
            Ok(gauss((-2.0 * log_sigma).exp(), &phi.forward(a), &phi.forward(b)))
        }
        KernelSpec::DeepM {
            phi,
            phi_prime,
            log_sigma,
            log_sigma0,
            logit_tau,
        } => {
            let (a, b) = reals("deep_m")?;
            if a.len() != phi.input_dim() {
                return Err(Error::IncompatiblePoints("dimension does not match network".into()));
            }
            let tau = logistic(*logit_tau);
            let shift = |v: &[f64]| -> Vec<f64> { phi_prime.forward(v).iter().zip(v).map(|(f, x)| f + x).collect() };
            let g = gauss((-2.0 * log_sigma).exp(), &phi.forward(a), &phi.forward(b));
            let g0 = gauss((-2.0 * log_sigma0).exp(), &shift(a), &shift(b));
            Ok(((1.0 - tau) * g + tau) * g0)
        }
        KernelSpec::ProductWitness(f) => Ok(f.value(x) * f.value(y)),
        KernelSpec::Scaled { factor, inner } => Ok(factor * eval(inner, x, y)?),
    }
}

/// Gram matrix `G[i, j] = K(a_i, b_j)`.
pub fn gram(kernel: &KernelSpec, a: &Sample, b: &Sample) -> Result<DMatrix<f64>> {
    gram_with(kernel, a, b, Execution::default())
}

pub fn gram_with(kernel: &KernelSpec, a: &Sample, b: &Sample, exec: Execution) -> Result<DMatrix<f64>> {
    if !a.compatible_with(b) {
        return Err(Error::IncompatiblePoints(format!(
            "{:?} vs {:?}",
            a.space(),
            b.space()
        )));
    }
    let (ev, ea) = kernel.prepare(a)?;
    let eb = kernel.embed(b)?;
    let (n, m) = (a.len(), b.len());
    let rows = exec.map_collect(n, |i| (0..m).map(|j| ev.value(&ea, i, &eb, j)).collect::<Vec<_>>());
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Median of the strictly positive pairwise Euclidean distances over the
/// pooled real-valued sample `x ∪ y`.
pub fn median_heuristic(x: &Sample, y: &Sample) -> Result<f64> {
    let mut pts: Vec<&[f64]> = Vec::with_capacity(x.len() + y.len());
    for s in [x, y] {
        match s.space() {
            Space::Real { .. } => pts.extend((0..s.len()).map(|i| s.real_point(i))),
            Space::Categorical { .. } => {
                return Err(invalid("median heuristic is only defined for real-vector points"))
            }
        }
    }
    if !x.compatible_with(y) {
        return Err(Error::IncompatiblePoints("pooled samples differ in dimension".into()));
    }
    if pts.len() < 2 {
        return Err(Error::SampleTooSmall {
            what: "median heuristic",
            needed: 2,
            got: pts.len(),
        });
    }
    let mut d: Vec<f64> = Vec::with_capacity(pts.len() * (pts.len() - 1) / 2);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let v = sq_dist(pts[i], pts[j]).sqrt();
            if v > 0.0 {
                d.push(v);
            }
        }
    }
    if d.is_empty() {
        return Err(Error::Degenerate("all pairwise distances are zero".into()));
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    Ok(if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Point;
    use crate::rng::RandomSource;
    use rand::Rng;

    fn cat(c: u32) -> Point {
        Point::Categorical(c)
    }

    #[test]
    fn identity_and_gaussian_values() {
        let k = KernelSpec::DiscreteIdentity { k: 5 };
        assert_eq!(eval(&k, (&cat(3)).into(), (&cat(3)).into()).unwrap(), 1.0);
        assert_eq!(eval(&k, (&cat(3)).into(), (&cat(4)).into()).unwrap(), 0.0);
        assert!(eval(&k, (&cat(6)).into(), (&cat(4)).into()).is_err());
        let g = KernelSpec::gaussian(1.0);
        let x = Point::Real(vec![0.3, -1.0]);
        assert_eq!(eval(&g, (&x).into(), (&x).into()).unwrap(), 1.0);
        let y = Point::Real(vec![1.0]);
        assert!(matches!(
            eval(&g, (&x).into(), (&y).into()),
            Err(Error::IncompatiblePoints(_))
        ));
    }

    #[test]
    fn product_witness_value() {
        let k = KernelSpec::product(|p| match p {
            PointRef::Real(v) => v[0],
            PointRef::Categorical(c) => c as f64,
        });
        let (x, y) = (Point::Real(vec![2.0]), Point::Real(vec![-3.0]));
        assert_eq!(eval(&k, (&x).into(), (&y).into()).unwrap(), -6.0);
    }

    #[test]
    fn identity_gram_table() {
        let k = KernelSpec::DiscreteIdentity { k: 2 };
        let a = Sample::categorical(2, vec![1, 2]).unwrap();
        let b = Sample::categorical(2, vec![1, 1]).unwrap();
        let g = gram(&k, &a, &b).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]));
        let single = Sample::categorical(2, vec![2]).unwrap();
        assert_eq!(gram(&k, &single, &single).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn gram_matches_pointwise_eval_for_deep_kernels() {
        let mut rng = RandomSource::new(3).rng();
        let phi = FeatureNet::random(&[2, 6, 4], &mut rng).unwrap();
        let phip = FeatureNet::random(&[2, 6, 2], &mut rng).unwrap();
        let kernels = [
            KernelSpec::deep_o(0.7),
            KernelSpec::deep_g(phi.clone(), 1.3),
            KernelSpec::deep_m(phi, phip, 1.1, 0.8, 0.3).unwrap(),
            KernelSpec::Gaussian {
                sigma: 0.5,
                normalized: true,
            },
        ];
        let a = Sample::real(2, (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let b = Sample::real(2, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        for k in &kernels {
            let g = gram(k, &a, &b).unwrap();
            for i in 0..a.len() {
                for j in 0..b.len() {
                    let v = eval(k, a.point(i), b.point(j)).unwrap();
                    assert!((g[(i, j)] - v).abs() < 1e-14);
                    let w = eval(k, b.point(j), a.point(i)).unwrap();
                    assert!((v - w).abs() < 1e-14, "symmetry");
                }
            }
        }
    }

    #[test]
    fn gaussian_gram_is_psd() {
        let base = RandomSource::new(21);
        for t in 0..100 {
            let mut rng = base.fork(&[t]).rng();
            let dim = rng.random_range(1..4);
            let n = rng.random_range(2..30);
            let a = Sample::real(dim, (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let k = KernelSpec::gaussian(rng.random_range(0.2..3.0));
            let g = gram(&k, &a, &a).unwrap();
            let ev = g.symmetric_eigenvalues();
            let max = ev.max();
            assert!(ev.min() >= -1e-8 * max, "min eigenvalue {} vs max {max}", ev.min());
        }
    }

    #[test]
    fn mixing_kernel_degenerates_as_tau_goes_to_one() {
        let mut rng = RandomSource::new(5).rng();
        let phi = FeatureNet::random(&[3, 5, 4], &mut rng).unwrap();
        let phip = FeatureNet::random(&[3, 5, 3], &mut rng).unwrap();
        let sigma0 = 0.9;
        let km = KernelSpec::deep_m(phi, phip.clone(), 1.0, sigma0, 1.0 - 1e-12).unwrap();
        let g0 = KernelSpec::gaussian(sigma0);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let shift = |v: &[f64]| Point::Real(phip.forward(v).iter().zip(v).map(|(a, b)| a + b).collect());
            let direct = eval(&km, PointRef::Real(&x), PointRef::Real(&y)).unwrap();
            let reference = eval(&g0, (&shift(&x)).into(), (&shift(&y)).into()).unwrap();
            assert!((direct - reference).abs() < 1e-10);
        }
    }

    #[test]
    fn params_round_trip() {
        let mut rng = RandomSource::new(6).rng();
        let phi = FeatureNet::random(&[2, 3, 2], &mut rng).unwrap();
        let phip = FeatureNet::random(&[2, 3, 2], &mut rng).unwrap();
        let mut k = KernelSpec::deep_m(phi, phip, 1.0, 2.0, 0.5).unwrap();
        let p = k.params();
        assert_eq!(p.len(), k.num_params());
        assert_eq!(p[2], 0.0);
        let shifted: Vec<f64> = p.iter().map(|v| v + 0.1).collect();
        k.set_params(&shifted);
        assert_eq!(k.params(), shifted);
        assert_eq!(KernelSpec::DiscreteIdentity { k: 3 }.num_params(), 0);
    }

    #[test]
    fn median_heuristic_cases() {
        let two = Sample::scalars(vec![0.0]).unwrap();
        let other = Sample::scalars(vec![2.0]).unwrap();
        assert_eq!(median_heuristic(&two, &other).unwrap(), 2.0);
        let x = Sample::scalars(vec![0.0, 1.0]).unwrap();
        let y = Sample::scalars(vec![3.0]).unwrap();
        assert_eq!(median_heuristic(&x, &y).unwrap(), 2.0);
        // duplicates contribute zero distances that are dropped
        let xd = Sample::scalars(vec![0.0, 0.0, 1.0]).unwrap();
        let yd = Sample::scalars(vec![3.0]).unwrap();
        // positive distances: 1, 1, 3, 3, 2 -> median 2
        assert_eq!(median_heuristic(&xd, &yd).unwrap(), 2.0);
        let z = Sample::scalars(vec![1.0, 1.0]).unwrap();
        assert!(matches!(median_heuristic(&z, &z), Err(Error::Degenerate(_))));
        let c = Sample::categorical(2, vec![1, 2]).unwrap();
        assert!(median_heuristic(&c, &c).is_err());
    }
}
