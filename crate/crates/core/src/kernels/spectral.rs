use nalgebra::{DMatrix, SymmetricEigen};

use super::{gram, KernelSpec};
use crate::data::Sample;
use crate::error::{invalid, Error, Result};

/// Eigenpairs of the integral operator `f ↦ Σ_x μ(x) K(x, ·) f(x)` on a
/// finite support.
///
/// Column `j` of `eigenfunctions` holds `e_j` evaluated at every support
/// point; the columns are orthonormal in `L²(μ)` and eigenvalues are sorted
/// non-increasingly.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: DMatrix<f64>,
    pub mu: Vec<f64>,
}

const TOL: f64 = 1e-8;

impl SpectralDecomposition {
    pub fn from_parts(eigenvalues: Vec<f64>, eigenfunctions: DMatrix<f64>, mu: Vec<f64>) -> Result<Self> {
        if eigenfunctions.ncols() != eigenvalues.len() || eigenfunctions.nrows() != mu.len() {
            return Err(invalid("eigenfunction matrix shape does not match eigenvalues and support"));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("eigenvalues must be non-increasing"));
        }
        Ok(Self {
            eigenvalues,
            eigenfunctions,
            mu,
        })
    }

    pub fn support_size(&self) -> usize {
        self.mu.len()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `Σ_j λ_j e_j(x) e_j(y)` at support indices `x`, `y`.
    pub fn reconstruct(&self, x: usize, y: usize) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(j, l)| l * self.eigenfunctions[(x, j)] * self.eigenfunctions[(y, j)])
            .sum()
    }

    /// `max |Σ_x μ(x) e_i(x) e_j(x) - 1{i = j}|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let e = &self.eigenfunctions;
        let weighted = DMatrix::from_fn(e.nrows(), e.ncols(), |r, c| self.mu[r] * e[(r, c)]);
        let gram = e.transpose() * weighted;
        let mut worst = 0.0f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `max |K(x, y) - Σ_j λ_j e_j(x) e_j(y)|` against a support Gram matrix.
    pub fn reconstruction_residual(&self, kernel_gram: &DMatrix<f64>) -> f64 {
        let n = self.support_size();
        let mut worst = 0.0f64;
        for x in 0..n {
            for y in 0..n {
                worst = worst.max((kernel_gram[(x, y)] - self.reconstruct(x, y)).abs());
            }
        }
        worst
    }
}

/// Spectral decomposition of `kernel` on the finite `support` with base
/// measure weights `mu` (one positive weight per support point).
pub fn eigendecompose(kernel: &KernelSpec, support: &Sample, mu: &[f64]) -> Result<SpectralDecomposition> {
    let n = support.len();
    if n == 0 || mu.len() != n {
        return Err(invalid(format!(
            "support of size {n} needs exactly {n} base-measure weights, got {}",
            mu.len()
        )));
    }
    if mu.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(invalid("base-measure weights must be positive and finite"));
    }
    let g = gram(kernel, support, support)?;
    let sqrt_mu: Vec<f64> = mu.iter().map(|w| w.sqrt()).collect();
    // D^{1/2} G D^{1/2} is symmetric and shares the operator's spectrum.
    let sym = DMatrix::from_fn(n, n, |i, j| sqrt_mu[i] * 0.5 * (g[(i, j)] + g[(j, i)]) * sqrt_mu[j]);
    let SymmetricEigen {
        eigenvalues,
        eigenvectors,
    } = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&j| eigenvalues[j]).collect();
    let functions = DMatrix::from_fn(n, n, |r, c| eigenvectors[(r, order[c])] / sqrt_mu[r]);
    let spec = SpectralDecomposition {
        eigenvalues: values,
        eigenfunctions: functions,
        mu: mu.to_vec(),
    };
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let resid = spec.reconstruction_residual(&g);
    let ortho = spec.orthonormality_residual();
    if resid > TOL * scale || ortho > TOL {
        return Err(Error::Degenerate(format!(
            "eigendecomposition residuals too large (reconstruction {resid:e}, orthonormality {ortho:e})"
        )));
    }
    let top = spec.eigenvalues.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
    if spec.eigenvalues.iter().any(|l| *l < -TOL * top) {
        log::warn!("kernel is not positive semidefinite on this support");
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PointRef;
    use crate::rng::RandomSource;
    use rand::Rng;

    #[test]
    fn identity_spectrum_is_flat() {
        let k = 100u32;
        let support = Sample::categorical(k, (1..=k).collect()).unwrap();
        let mu = vec![1.0 / k as f64; k as usize];
        let spec = eigendecompose(&KernelSpec::DiscreteIdentity { k }, &support, &mu).unwrap();
        for l in &spec.eigenvalues {
            assert!((l - 0.01).abs() < 1e-12);
        }
        assert!(spec.orthonormality_residual() < 1e-10);
    }

    #[test]
    fn product_kernel_has_rank_one_spectrum() {
        let k = 6u32;
        let f = [0.5, -1.0, 2.0, 0.0, 1.5, -0.25];
        let kernel = KernelSpec::product(move |p| match p {
            PointRef::Categorical(c) => f[(c - 1) as usize],
            PointRef::Real(_) => unreachable!(),
        });
        let support = Sample::categorical(k, (1..=k).collect()).unwrap();
        let mu = vec![0.1, 0.2, 0.1, 0.3, 0.2, 0.1];
        let spec = eigendecompose(&kernel, &support, &mu).unwrap();
        let expected: f64 = mu.iter().zip(&f).map(|(m, v)| m * v * v).sum();
        assert!((spec.eigenvalues[0] - expected).abs() < 1e-12);
        for l in &spec.eigenvalues[1..] {
            assert!(l.abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_reconstruction() {
        let base = RandomSource::new(99);
        for t in 0..10 {
            let mut rng = base.fork(&[t]).rng();
            let s = Sample::real(2, (0..40).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let mut mu: Vec<f64> = (0..20).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = mu.iter().sum();
            mu.iter_mut().for_each(|m| *m /= total);
            let k = KernelSpec::gaussian(0.8);
            let spec = eigendecompose(&k, &s, &mu).unwrap();
            let g = gram(&k, &s, &s).unwrap();
            assert!(spec.reconstruction_residual(&g) < 1e-8);
            assert!(spec.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rejects_bad_weights() {
        let s = Sample::categorical(2, vec![1, 2]).unwrap();
        let k = KernelSpec::DiscreteIdentity { k: 2 };
        assert!(eigendecompose(&k, &s, &[0.5]).is_err());
        assert!(eigendecompose(&k, &s, &[0.5, 0.0]).is_err());
    }
}
