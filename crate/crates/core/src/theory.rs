//! Sample-complexity calculators and exact moments of the test statistic on
//! finite spaces.
//!
//! The bound calculators set every unnamed universal constant to 1, so their
//! outputs are order-of-magnitude planning figures, not guarantees.

use nalgebra::{DMatrix, DVector};

use crate::data::DiscreteDistribution;
use crate::error::{invalid, Result};
use crate::kernels::SpectralDecomposition;

pub const CONSTANT_CAVEAT: &str = "universal constants set to 1; order-of-magnitude only";

/// Inputs shared by the bound calculators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemParams {
    /// Bound on the densities relative to the base measure.
    pub c: f64,
    /// MMD separation between the two hypotheses.
    pub epsilon: f64,
    /// Minimal signal rate under the alternative.
    pub delta: f64,
    /// Misspecification radius.
    pub r: f64,
    /// Target total error.
    pub alpha: f64,
    /// True mixture rate.
    pub nu: f64,
}

impl ProblemParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c > 0.0
            && self.c.is_finite()
            && self.epsilon > 0.0
            && self.epsilon.is_finite()
            && self.delta > 0.0
            && self.delta <= 1.0
            && self.r >= 0.0
            && self.r.is_finite()
            && self.alpha > 0.0
            && self.alpha < 1.0
            && (0.0..=1.0).contains(&self.nu);
        if ok {
            Ok(())
        } else {
            Err(invalid(format!(
                "need C > 0, epsilon > 0, delta in (0, 1], R >= 0, alpha in (0, 1), nu in [0, 1]; got {self:?}"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaNorms {
    /// Largest eigenvalue.
    pub sup: f64,
    /// `sqrt(Σ_j λ_j²)`.
    pub l2: f64,
    /// `sqrt(Σ_{j=2..J} λ_j²)`.
    pub l2j: f64,
    /// Whether `J` exceeded the spectrum length and was truncated.
    pub truncated: bool,
}

pub fn lambda_norms(spec: &SpectralDecomposition, j: usize) -> Result<LambdaNorms> {
    if j < 2 {
        return Err(invalid(format!("truncation level J must be at least 2, got {j}")));
    }
    let l = &spec.eigenvalues;
    if l.is_empty() {
        return Err(invalid("empty spectrum"));
    }
    let truncated = j > l.len();
    if truncated {
        log::warn!("J = {j} exceeds the spectrum length {}; truncating", l.len());
    }
    let top = j.min(l.len());
    Ok(LambdaNorms {
        sup: l[0],
        l2: l.iter().map(|v| v * v).sum::<f64>().sqrt(),
        l2j: l[1..top].iter().map(|v| v * v).sum::<f64>().sqrt(),
        truncated,
    })
}

/// Sufficient sample sizes for the test to reach total error `alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundResult {
    /// Requirement on `min{m, n}`.
    pub min_m_n: f64,
    /// Requirement on `min{n, sqrt(nm)}`.
    pub min_n_sqrt_nm: f64,
    pub constant_caveat: &'static str,
}

/// `C λ_sup ln(1/α) ((1+R)/(εδ))²` and `C ‖λ‖₂ ln(1/α) / (δ ε²)`.
pub fn upper_bound(p: &ProblemParams, spec: &SpectralDecomposition) -> Result<BoundResult> {
    p.validate()?;
    let norms = lambda_norms(spec, spec.len().max(2))?;
    let log_term = (1.0 / p.alpha).ln();
    Ok(BoundResult {
        min_m_n: p.c * norms.sup * log_term * ((1.0 + p.r) / (p.epsilon * p.delta)).powi(2),
        min_n_sqrt_nm: p.c * norms.l2 * log_term / (p.delta * p.epsilon * p.epsilon),
        constant_caveat: CONSTANT_CAVEAT,
    })
}

/// Necessary sample sizes below which no test reaches total error `alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerBound {
    /// `λ₂ ln(1/α) / (ε² δ²)`.
    pub m_min: f64,
    /// `‖λ‖_{2J} sqrt(ln(1/α)) / ε²`.
    pub n_min: f64,
    /// Requirement on `δ m + sqrt(mn)`: `‖λ‖_{2J} sqrt(ln(1/α)) / (ε² δ)`.
    pub mixed_min: f64,
    /// Whether the row integrals `Σ_x μ(x) K(x, y)` are constant and equal
    /// to `λ₁`, as the bound assumes. Reported, not enforced.
    pub precondition_holds: bool,
    pub row_integral_deviation: f64,
    pub constant_caveat: &'static str,
}

pub fn lower_bound(p: &ProblemParams, spec: &SpectralDecomposition, j: usize) -> Result<LowerBound> {
    p.validate()?;
    let norms = lambda_norms(spec, j)?;
    let lambda2 = spec.eigenvalues.get(1).copied().unwrap_or(0.0);
    let log_term = (1.0 / p.alpha).ln();
    let e2 = p.epsilon * p.epsilon;
    let deviation = row_integral_deviation(spec);
    let scale = spec.eigenvalues[0].abs().max(1.0);
    Ok(LowerBound {
        m_min: lambda2 * log_term / (e2 * p.delta * p.delta),
        n_min: norms.l2j * log_term.sqrt() / e2,
        mixed_min: norms.l2j * log_term.sqrt() / (e2 * p.delta),
        precondition_holds: deviation <= 1e-8 * scale,
        row_integral_deviation: deviation,
        constant_caveat: CONSTANT_CAVEAT,
    })
}

/// `max_y |Σ_x μ(x) K(x, y) − λ₁|` with `K` rebuilt from the spectrum.
pub fn row_integral_deviation(spec: &SpectralDecomposition) -> f64 {
    let n = spec.support_size();
    let top = spec.eigenvalues.first().copied().unwrap_or(0.0);
    (0..n)
        .map(|y| {
            let integral: f64 = (0..n).map(|x| spec.mu[x] * spec.reconstruct(x, y)).sum();
            (integral - top).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest `J ≥ 2` with `2ε sqrt(J − 1) ≤ ‖λ‖_{2J}`, or 1 when none qualifies.
pub fn jstar_lower_bound(spec: &SpectralDecomposition, epsilon: f64) -> usize {
    let l = &spec.eigenvalues;
    let mut acc = 0.0;
    let mut best = 1;
    for j in 2..=l.len() {
        acc += l[j - 1] * l[j - 1];
        if 2.0 * epsilon * ((j - 1) as f64).sqrt() <= acc.sqrt() {
            best = j;
        }
    }
    best
}

/// Exact first two moments of `−T(X, Y, Z) + γ(X, Y, π)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    /// `MMD²(P_X, P_Y)`.
    pub mmd2: f64,
    /// Projection coefficient `⟨θ_Z − θ_X, θ_Y − θ_X⟩ / MMD²`; `None` when
    /// `MMD² = 0`.
    pub nu: Option<f64>,
}

/// Mean and variance of `−T + γ` when `X, Y` hold `n` i.i.d. draws from
/// `px, py` and `Z` holds `m` draws from `pz`, for the kernel whose spectrum
/// on the support `1..=k` is `spec`.
///
/// The statistic splits into five kernel sums
/// `I = Σ K(X_i, Z_j)`, `II = Σ K(Y_i, Z_j)`, `III = Σ_{i<j} K(X_i, X_j)`,
/// `IV = Σ_{i<j} K(Y_i, Y_j)` and `V = Σ K(X_i, Y_j)`, and the variance is
/// assembled from their five variances and ten covariances written in terms
/// of the eigen-coefficients `x_ℓ = E e_ℓ(X)` and `x_ℓℓ' = E e_ℓ(X) e_ℓ'(X)`.
pub fn exact_moments_discrete(
    px: &DiscreteDistribution,
    py: &DiscreteDistribution,
    pz: &DiscreteDistribution,
    spec: &SpectralDecomposition,
    n: usize,
    m: usize,
    pi: f64,
) -> Result<Moments> {
    let k = spec.support_size();
    for d in [px, py, pz] {
        if d.support_size() != k {
            return Err(invalid(format!(
                "distribution on {} points does not match the spectral support of {k}",
                d.support_size()
            )));
        }
    }
    if n < 2 || m < 2 {
        return Err(invalid("exact moments need n >= 2 and m >= 2"));
    }
    crate::stats::check_pi(pi)?;
    let e = &spec.eigenfunctions;
    let lam = DVector::from_column_slice(&spec.eigenvalues);
    let first = |p: &DiscreteDistribution| e.transpose() * DVector::from_column_slice(p.pmf());
    let second = |p: &DiscreteDistribution| {
        let weighted = DMatrix::from_fn(e.nrows(), e.ncols(), |r, c| p.pmf()[r] * e[(r, c)]);
        e.transpose() * weighted
    };
    let (x, y, z) = (first(px), first(py), first(pz));
    let (xm, ym, zm) = (second(px), second(py), second(pz));

    // ⟨θ_A, θ_B⟩ = Σ_ℓ λ_ℓ a_ℓ b_ℓ.
    let ip = |a: &DVector<f64>, b: &DVector<f64>| lam.component_mul(a).dot(b);
    // Σ λ_ℓ λ_ℓ' A_ℓℓ' u_ℓ v_ℓ'.
    let quad = |a: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>| lam.component_mul(u).dot(&(a * lam.component_mul(v)));
    // Σ λ_ℓ λ_ℓ' (A_ℓℓ' B_ℓℓ' − a_ℓ a_ℓ' b_ℓ b_ℓ').
    let pair = |a: &DMatrix<f64>, b: &DMatrix<f64>, av: &DVector<f64>, bv: &DVector<f64>| {
        let lam_m = &lam * lam.transpose();
        lam_m.component_mul(&a.component_mul(b)).sum() - ip(av, bv).powi(2)
    };
    let cx = &xm - &x * x.transpose();
    let cy = &ym - &y * y.transpose();
    let cz = &zm - &z * z.transpose();

    let (nf, mf) = (n as f64, m as f64);
    let pairs = nf * (nf - 1.0) / 2.0;
    let var_i = nf * mf * pair(&xm, &zm, &x, &z) + nf * mf * (mf - 1.0) * quad(&cx, &z, &z)
        + nf * (nf - 1.0) * mf * quad(&cz, &x, &x);
    let var_ii = nf * mf * pair(&ym, &zm, &y, &z) + nf * mf * (mf - 1.0) * quad(&cy, &z, &z)
        + nf * (nf - 1.0) * mf * quad(&cz, &y, &y);
    let var_iii = pairs * pair(&xm, &xm, &x, &x) + nf * (nf - 1.0) * (nf - 2.0) * quad(&cx, &x, &x);
    let var_iv = pairs * pair(&ym, &ym, &y, &y) + nf * (nf - 1.0) * (nf - 2.0) * quad(&cy, &y, &y);
    let var_v = nf * nf * pair(&xm, &ym, &x, &y)
        + nf * nf * (nf - 1.0) * quad(&cx, &y, &y)
        + nf * nf * (nf - 1.0) * quad(&cy, &x, &x);
    let cov_i_ii = nf * nf * mf * quad(&cz, &x, &y);
    let cov_i_iii = nf * (nf - 1.0) * mf * quad(&cx, &z, &x);
    let cov_i_v = nf * nf * mf * quad(&cx, &z, &y);
    let cov_ii_iv = nf * (nf - 1.0) * mf * quad(&cy, &z, &y);
    let cov_ii_v = nf * nf * mf * quad(&cy, &z, &x);
    let cov_iii_v = nf * nf * (nf - 1.0) * quad(&cx, &x, &y);
    let cov_iv_v = nf * nf * (nf - 1.0) * quad(&cy, &y, &x);
    // I, IV; II, III; and III, IV share no sample, so they are uncorrelated.

    let pib = 1.0 - pi;
    let c1 = 1.0 / (nf * mf);
    let c2 = -1.0 / (nf * mf);
    let c3 = -2.0 * pib / (nf * (nf - 1.0));
    let c4 = 2.0 * pi / (nf * (nf - 1.0));
    let c5 = (pib - pi) / (nf * nf);
    let variance = c1 * c1 * var_i
        + c2 * c2 * var_ii
        + c3 * c3 * var_iii
        + c4 * c4 * var_iv
        + c5 * c5 * var_v
        + 2.0
            * (c1 * c2 * cov_i_ii
                + c1 * c3 * cov_i_iii
                + c1 * c5 * cov_i_v
                + c2 * c4 * cov_ii_iv
                + c2 * c5 * cov_ii_v
                + c3 * c5 * cov_iii_v
                + c4 * c5 * cov_iv_v);

    let (xx, yy, xy, zx, zy) = (ip(&x, &x), ip(&y, &y), ip(&x, &y), ip(&z, &x), ip(&z, &y));
    let mean = zx - zy - pib * xx + pi * yy + (pib - pi) * xy;
    let mmd2 = xx + yy - 2.0 * xy;
    let nu = (mmd2 > 0.0).then(|| (zy - zx - xy + xx) / mmd2);
    Ok(Moments {
        mean,
        variance,
        mmd2,
        nu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::kernels::{eigendecompose, gram, KernelSpec};
    use crate::stats::{gamma_threshold, t_statistic};

    fn identity_spec(k: u32) -> SpectralDecomposition {
        let support = Sample::categorical(k, (1..=k).collect()).unwrap();
        eigendecompose(&KernelSpec::DiscreteIdentity { k }, &support, &vec![1.0 / k as f64; k as usize]).unwrap()
    }

    fn toy_params(epsilon: f64) -> ProblemParams {
        ProblemParams {
            c: 1.3,
            epsilon,
            delta: 1.0,
            r: 0.0,
            alpha: 0.05,
            nu: 0.0,
        }
    }

    #[test]
    fn identity_norms() {
        let s = identity_spec(100);
        let nrm = lambda_norms(&s, 100).unwrap();
        assert!((nrm.sup - 0.01).abs() < 1e-12);
        assert!((nrm.l2 - 0.1).abs() < 1e-12);
        let two = lambda_norms(&s, 2).unwrap();
        assert!((two.l2j - 0.01).abs() < 1e-12);
        assert!(lambda_norms(&s, 101).unwrap().truncated);
        assert!(lambda_norms(&s, 1).is_err());
    }

    #[test]
    fn upper_bound_toy_values_and_scaling() {
        let s = identity_spec(100);
        let b = upper_bound(&toy_params(0.06), &s).unwrap();
        assert!((b.min_m_n - 1.3 * 0.01 * 20f64.ln() / 0.0036).abs() < 1e-9);
        assert!((b.min_m_n - 10.82).abs() < 0.01);
        assert!((b.min_n_sqrt_nm - 108.2).abs() < 0.1);
        let b2 = upper_bound(&toy_params(0.12), &s).unwrap();
        assert!((b.min_m_n / b2.min_m_n - 4.0).abs() < 1e-12);
        assert!((b.min_n_sqrt_nm / b2.min_n_sqrt_nm - 4.0).abs() < 1e-12);
        let mut p = toy_params(0.06);
        p.r = 1.0;
        let b3 = upper_bound(&p, &s).unwrap();
        assert!((b3.min_m_n / b.min_m_n - 4.0).abs() < 1e-12);
        assert_eq!(b3.min_n_sqrt_nm, b.min_n_sqrt_nm);
        p.epsilon = 0.0;
        assert!(upper_bound(&p, &s).is_err());
    }

    #[test]
    fn lower_bound_toy_values() {
        let s = identity_spec(100);
        let lb = lower_bound(&toy_params(0.004), &s, 100).unwrap();
        assert!((lb.m_min - 1872.3).abs() < 0.1, "{}", lb.m_min);
        assert_eq!(lb.mixed_min, lb.n_min);
        assert!(lb.precondition_holds);
        let coarser = lower_bound(&toy_params(0.008), &s, 100).unwrap();
        assert!(coarser.m_min <= lb.m_min && coarser.n_min <= lb.n_min);
    }

    #[test]
    fn jstar_identity_cases() {
        let s = identity_spec(100);
        assert_eq!(jstar_lower_bound(&s, 0.004), 100);
        assert_eq!(jstar_lower_bound(&s, 0.01), 1);
        let rank_one = SpectralDecomposition::from_parts(
            vec![1.0, 0.0],
            DMatrix::identity(2, 2),
            vec![1.0, 1.0],
        )
        .unwrap();
        assert_eq!(jstar_lower_bound(&rank_one, 1e-6), 1);
    }

    fn dist(p: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(p.to_vec()).unwrap()
    }

    /// All assignments of `len` categories from `1..=k`.
    fn assignments(k: u32, len: usize) -> Vec<Vec<u32>> {
        let mut out = vec![vec![]];
        for _ in 0..len {
            out = out
                .into_iter()
                .flat_map(|v| {
                    (1..=k).map(move |c| {
                        let mut w = v.clone();
                        w.push(c);
                        w
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn moments_match_exact_enumeration() {
        // Non-identity kernel on three points, checked against all 3^7 outcomes.
        let k = 3u32;
        let f = [0.3, -1.2, 0.8];
        let kernel = KernelSpec::product(move |p| match p {
            crate::data::PointRef::Categorical(c) => f[(c - 1) as usize],
            _ => unreachable!(),
        });
        let support = Sample::categorical(k, vec![1, 2, 3]).unwrap();
        let id = KernelSpec::DiscreteIdentity { k };
        let mixed = KernelSpec::Scaled {
            factor: 1.0,
            inner: Box::new(id.clone()),
        };
        let (px, py, pz) = (dist(&[0.5, 0.3, 0.2]), dist(&[0.1, 0.3, 0.6]), dist(&[0.3, 0.3, 0.4]));
        let (n, m, pi) = (2usize, 3usize, 0.3);
        for kern in [kernel, mixed] {
            let mu = [0.2, 0.5, 0.3];
            let spec = eigendecompose(&kern, &support, &mu).unwrap();
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for xs in assignments(k, n) {
                for ys in assignments(k, n) {
                    for zs in assignments(k, m) {
                        let w: f64 = xs.iter().map(|&c| px.pmf()[(c - 1) as usize]).product::<f64>()
                            * ys.iter().map(|&c| py.pmf()[(c - 1) as usize]).product::<f64>()
                            * zs.iter().map(|&c| pz.pmf()[(c - 1) as usize]).product::<f64>();
                        let (x, y, z) = (
                            Sample::categorical(k, xs.clone()).unwrap(),
                            Sample::categorical(k, ys.clone()).unwrap(),
                            Sample::categorical(k, zs.clone()).unwrap(),
                        );
                        let s = -t_statistic(&x, &y, &z, &kern).unwrap() + gamma_threshold(&x, &y, pi, &kern).unwrap();
                        m1 += w * s;
                        m2 += w * s * s;
                    }
                }
            }
            let mo = exact_moments_discrete(&px, &py, &pz, &spec, n, m, pi).unwrap();
            assert!((mo.mean - m1).abs() < 1e-12, "{} vs {m1}", mo.mean);
            assert!((mo.variance - (m2 - m1 * m1)).abs() < 1e-12, "{} vs {}", mo.variance, m2 - m1 * m1);
        }
    }

    #[test]
    fn mean_identities() {
        let s = identity_spec(4);
        let px = dist(&[0.4, 0.3, 0.2, 0.1]);
        let py = dist(&[0.1, 0.2, 0.3, 0.4]);
        let mo = exact_moments_discrete(&px, &px, &py, &s, 5, 5, 0.7).unwrap();
        assert_eq!(mo.mmd2, 0.0);
        assert!(mo.mean.abs() < 1e-15 && mo.nu.is_none());
        let mo = exact_moments_discrete(&px, &py, &px, &s, 5, 5, 0.5).unwrap();
        assert!((mo.mean - 0.5 * mo.mmd2).abs() < 1e-15);
        assert!(mo.nu.unwrap().abs() < 1e-12);
        // E[T] via the Gram matrix: ⟨p_Z, K (p_Y − p_X)⟩.
        let support = Sample::categorical(4, vec![1, 2, 3, 4]).unwrap();
        let g = gram(&KernelSpec::DiscreteIdentity { k: 4 }, &support, &support).unwrap();
        let pz = dist(&[0.25, 0.25, 0.4, 0.1]);
        let diff = DVector::from_fn(4, |i, _| py.pmf()[i] - px.pmf()[i]);
        let et = DVector::from_column_slice(pz.pmf()).dot(&(&g * diff));
        let ex = DVector::from_column_slice(px.pmf());
        let ey = DVector::from_column_slice(py.pmf());
        let egamma = 0.2 * (ex.dot(&(&g * &ex)) + ey.dot(&(&g * &ey)) - 2.0 * ex.dot(&(&g * &ey)))
            + ex.dot(&(&g * &ey))
            - ex.dot(&(&g * &ex));
        let mo = exact_moments_discrete(&px, &py, &pz, &s, 6, 4, 0.2).unwrap();
        assert!((mo.mean - (egamma - et)).abs() < 1e-10);
        assert!(mo.variance >= 0.0);
    }
}
