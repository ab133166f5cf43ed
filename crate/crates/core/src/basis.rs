//! Reduced-rank Gaussian-process basis functions.
//!
//! Laplacian eigenfunctions on the box `[−L_1, L_1] × … × [−L_d, L_d]`
//! with Dirichlet boundary conditions, weighted by the spectral density of
//! a squared-exponential kernel to give the prior column covariance `V`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

static CLAMPED: AtomicUsize = AtomicUsize::new(0);

/// Number of basis evaluations, process-wide, whose input was clamped to the domain.
pub fn clamp_count() -> usize {
    CLAMPED.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HilbertBasisConfig {
    /// Half-lengths `L_i` of the domain.
    pub half_lengths: Vec<f64>,
    /// Frequency index tuple `(j_1, …, j_d)` of every basis function.
    pub indices: Vec<Vec<u32>>,
}

impl HilbertBasisConfig {
    pub fn new(half_lengths: Vec<f64>, indices: Vec<Vec<u32>>) -> Result<Self> {
        let cfg = Self {
            half_lengths,
            indices,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `d = 1` with `j = 1..=n`.
    pub fn one_dim(half_length: f64, n: usize) -> Result<Self> {
        Self::new(vec![half_length], (1..=n as u32).map(|j| vec![j]).collect())
    }

    /// `d = 1` with the odd functions `j = 2, 4, …, 2n`.
    pub fn antisymmetric(half_length: f64, n: usize) -> Result<Self> {
        Self::new(vec![half_length], antisymmetric_indices(n))
    }

    /// The `n` index tuples with the smallest eigenvalues.
    pub fn smallest(half_lengths: Vec<f64>, n: usize) -> Result<Self> {
        let indices = smallest_eigen_indices(&half_lengths, n)?;
        Self::new(half_lengths, indices)
    }

    pub fn dims(&self) -> usize {
        self.half_lengths.len()
    }

    pub fn n_phi(&self) -> usize {
        self.indices.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_lengths.is_empty() {
            return Err(Error::Config("basis needs at least one input dimension".into()));
        }
        if let Some(l) = self.half_lengths.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("half-length {l} must be positive")));
        }
        if self.indices.is_empty() {
            return Err(Error::Config("basis has no functions".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for idx in &self.indices {
            if idx.len() != self.dims() {
                return Err(Error::Config(format!(
                    "index tuple {idx:?} has length {}, expected {}",
                    idx.len(),
                    self.dims()
                )));
            }
            if idx.contains(&0) {
                return Err(Error::Config(format!("index tuple {idx:?} contains 0")));
            }
            if !seen.insert(idx.clone()) {
                return Err(Error::Config(format!("index tuple {idx:?} repeated")));
            }
        }
        Ok(())
    }

    /// Per-dimension frequencies `π j_i / (2 L_i)` of function `k`.
    pub fn frequencies(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.indices[k]
            .iter()
            .zip(&self.half_lengths)
            .map(|(&j, &l)| PI * j as f64 / (2.0 * l))
    }
}

/// `φ_k(z) = Π_i L_i^{-1/2} sin(π j_i (z_i + L_i) / (2 L_i))`.
///
/// Inputs outside the domain are clamped to its boundary; see [`clamp_count`].
pub fn eval_basis(cfg: &HilbertBasisConfig, z: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(cfg.n_phi());
    eval_basis_into(cfg, z, out.as_mut_slice());
    out
}

pub(crate) fn eval_basis_into(cfg: &HilbertBasisConfig, z: &[f64], out: &mut [f64]) {
    debug_assert_eq!(z.len(), cfg.dims());
    let mut clamped = false;
    let zc: Vec<f64> = z
        .iter()
        .zip(&cfg.half_lengths)
        .map(|(&zi, &l)| {
            if zi.abs() > l {
                clamped = true;
                zi.clamp(-l, l)
            } else {
                zi
            }
        })
        .collect();
    if clamped && CLAMPED.fetch_add(1, Ordering::Relaxed) == 0 {
        log::warn!("basis input {z:?} outside the domain; clamping (further occurrences are only counted)");
    }
    let norm: f64 = cfg.half_lengths.iter().map(|l| l.sqrt().recip()).product();
    for (k, o) in out.iter_mut().enumerate() {
        let mut v = norm;
        for ((j, l), zi) in cfg.indices[k].iter().zip(&cfg.half_lengths).zip(&zc) {
            v *= (PI * *j as f64 * (zi + l) / (2.0 * l)).sin();
        }
        *o = v;
    }
}

/// `ρ_k = Σ_i (π j_i / (2 L_i))²`.
pub fn eigenvalues(cfg: &HilbertBasisConfig) -> DVector<f64> {
    DVector::from_fn(cfg.n_phi(), |k, _| cfg.frequencies(k).map(|w| w * w).sum())
}

/// `[2, 4, …, 2n]`.
pub fn antisymmetric_indices(n: usize) -> Vec<Vec<u32>> {
    (1..=n as u32).map(|j| vec![2 * j]).collect()
}

/// The `n` tuples with smallest eigenvalue, ties broken lexicographically.
pub fn smallest_eigen_indices(half_lengths: &[f64], n: usize) -> Result<Vec<Vec<u32>>> {
    let d = half_lengths.len();
    if d == 0 || n == 0 {
        return Err(Error::Config("need d >= 1 and n >= 1".into()));
    }
    // Every tuple among the n smallest has j_i <= n in each coordinate.
    let per_dim = n as u32;
    let total = (per_dim as usize).checked_pow(d as u32).filter(|&t| t <= 50_000_000);
    if total.is_none() {
        return Err(Error::Config(format!("index search space too large for d = {d}, n = {n}")));
    }
    let mut all = Vec::new();
    let mut idx = vec![1u32; d];
    loop {
        let rho: f64 = idx
            .iter()
            .zip(half_lengths)
            .map(|(&j, &l)| (PI * j as f64 / (2.0 * l)).powi(2))
            .sum();
        all.push((rho, idx.clone()));
        let mut pos = d;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            if idx[pos] < per_dim {
                idx[pos] += 1;
                for v in idx.iter_mut().skip(pos + 1) {
                    *v = 1;
                }
                pos = usize::MAX;
                break;
            }
        }
        if pos != usize::MAX {
            break;
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    Ok(all.into_iter().take(n).map(|(_, i)| i).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    SquaredExponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub sigma2: f64,
    /// One entry per input dimension, or a single shared value.
    pub lengthscales: Vec<f64>,
}

impl KernelSpec {
    pub fn squared_exponential(sigma2: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let k = Self {
            kind: KernelKind::SquaredExponential,
            sigma2,
            lengthscales,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Config(format!("kernel variance {} must be positive", self.sigma2)));
        }
        if self.lengthscales.is_empty() || self.lengthscales.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config("lengthscales must be non-empty and positive".into()));
        }
        Ok(())
    }

    fn lengthscale(&self, i: usize) -> f64 {
        if self.lengthscales.len() == 1 {
            self.lengthscales[0]
        } else {
            self.lengthscales[i]
        }
    }
}

/// Radial squared-exponential spectral density in `d` dimensions with the
/// first lengthscale: `σ² (2π)^{d/2} ℓ^d exp(−ℓ² ω² / 2)`.
pub fn se_spectral_density(k: &KernelSpec, d: usize, omega: f64) -> f64 {
    let l = k.lengthscales[0];
    k.sigma2 * (2.0 * PI).powf(d as f64 / 2.0) * l.powi(d as i32) * (-0.5 * l * l * omega * omega).exp()
}

/// Separable form `σ² (2π)^{d/2} Π ℓ_i exp(−½ Σ ℓ_i² ω_i²)`.
pub fn se_spectral_density_ard(k: &KernelSpec, omega: &[f64]) -> f64 {
    let d = omega.len();
    let mut log_s = k.sigma2.ln() + 0.5 * d as f64 * (2.0 * PI).ln();
    for (i, w) in omega.iter().enumerate() {
        let l = k.lengthscale(i);
        log_s += l.ln() - 0.5 * l * l * w * w;
    }
    log_s.exp()
}

/// `V = diag(S(ω_1), …, S(ω_{n_φ}))`; the separable density at the
/// per-dimension frequencies, which equals the radial one at `√ρ_k` when
/// the lengthscale is shared.
pub fn prior_column_covariance(cfg: &HilbertBasisConfig, k: &KernelSpec) -> Result<DMatrix<f64>> {
    if k.lengthscales.len() != 1 && k.lengthscales.len() != cfg.dims() {
        return Err(Error::Config(format!(
            "{} lengthscales for a {}-dimensional basis",
            k.lengthscales.len(),
            cfg.dims()
        )));
    }
    let diag = DVector::from_fn(cfg.n_phi(), |i, _| {
        let w: Vec<f64> = cfg.frequencies(i).collect();
        se_spectral_density_ard(k, &w)
    });
    if diag.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::SingularCovariance(
            "spectral density underflows to zero; shrink the lengthscale or the basis".into(),
        ));
    }
    Ok(DMatrix::from_diagonal(&diag))
}

/// Map from `(x, u)` to the basis input `z`.
pub type FeatureMap = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Feature map selecting state coordinates.
pub fn state_features(coords: Vec<usize>) -> FeatureMap {
    Arc::new(move |x, _u| DVector::from_iterator(coords.len(), coords.iter().map(|&i| x[i])))
}

/// A feature map composed with a Hilbert basis.
#[derive(Clone)]
pub struct BasisExpansion {
    pub basis: HilbertBasisConfig,
    pub features: FeatureMap,
}

impl BasisExpansion {
    pub fn new(basis: HilbertBasisConfig, features: FeatureMap) -> Self {
        Self { basis, features }
    }

    pub fn n_phi(&self) -> usize {
        self.basis.n_phi()
    }

    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let z = (self.features)(x, u);
        eval_basis(&self.basis, z.as_slice())
    }
}

impl std::fmt::Debug for BasisExpansion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BasisExpansion")
            .field("basis", &self.basis)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn substitution_values() {
        let cfg = HilbertBasisConfig::one_dim(1.0, 1).unwrap();
        assert_relative_eq!(eval_basis(&cfg, &[0.0])[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(eigenvalues(&cfg)[0], (PI / 2.0).powi(2), epsilon = 1e-15);
        let cfg2 = HilbertBasisConfig::new(vec![1.0, 1.0], vec![vec![1, 1]]).unwrap();
        assert_relative_eq!(eigenvalues(&cfg2)[0], 2.0 * (PI / 2.0).powi(2), epsilon = 1e-15);
    }

    #[test]
    fn boundary_is_zero() {
        let cfg = HilbertBasisConfig::smallest(vec![0.5, 2.0], 9).unwrap();
        let phi = eval_basis(&cfg, &[-0.5, -2.0]);
        assert!(phi.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn antisymmetric_listing() {
        assert_eq!(antisymmetric_indices(3), vec![vec![2], vec![4], vec![6]]);
    }

    #[test]
    fn smallest_indices_in_order() {
        let idx = smallest_eigen_indices(&[1.0, 1.0], 4).unwrap();
        assert_eq!(idx, vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
        let idx = smallest_eigen_indices(&[1.0, 3.0], 3).unwrap();
        assert_eq!(idx, vec![vec![1, 1], vec![1, 2], vec![1, 3]]);
    }

    #[test]
    fn invalid_configs() {
        assert!(HilbertBasisConfig::new(vec![0.0], vec![vec![1]]).is_err());
        assert!(HilbertBasisConfig::new(vec![1.0], vec![vec![0]]).is_err());
        assert!(HilbertBasisConfig::new(vec![1.0], vec![vec![1], vec![1]]).is_err());
        assert!(KernelSpec::squared_exponential(0.0, vec![1.0]).is_err());
    }

    #[test]
    fn radial_matches_separable_for_shared_lengthscale() {
        let cfg = HilbertBasisConfig::smallest(vec![2.0, 2.0], 6).unwrap();
        let k = KernelSpec::squared_exponential(3.0, vec![0.7]).unwrap();
        let v = prior_column_covariance(&cfg, &k).unwrap();
        let rho = eigenvalues(&cfg);
        for i in 0..6 {
            assert_relative_eq!(v[(i, i)], se_spectral_density(&k, 2, rho[i].sqrt()), max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_frequency_density() {
        let k = KernelSpec::squared_exponential(2.0, vec![0.5]).unwrap();
        assert_relative_eq!(se_spectral_density(&k, 1, 0.0), 2.0 * (2.0 * PI).sqrt() * 0.5);
    }
}
