//! Matrix-normal inverse-Wishart (MNIW) prior over the weight matrix `A` and
//! noise covariance `Σε` of the interface model `ξ = A φ(x) + ε`.
//!
//! The distribution is carried in two equivalent forms: the parameters
//! [`MniwParams`] `{M, V, Ψ, ν}` and the additive sufficient statistics
//! [`SuffStats`] `{χ0, χ1, χ2, χ3}`. Observing a pair `(φ, ξ)` adds
//! `(φξᵀ, φφᵀ, ξξᵀ, 1)` to the statistics, which is what makes the
//! parameters cheap to marginalize inside the particle methods.

mod factored;
mod special;
mod student_t;

pub use factored::{FactoredPosterior, PredictiveMoments};
pub use special::ln_multivariate_gamma;
pub use student_t::{sample_student_t, StudentTParams};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::error::{dim_check, Error, Result};
use crate::linalg::{is_symmetric, symmetrize, LowerFactor};
use crate::serde_matrix;

/// Margin above `n_ξ + n_φ + 1` that forgetting never pushes `χ3` below.
pub const FORGETTING_FLOOR_MARGIN: f64 = 1e-6;

/// Parameters `Θ = {M, V, Ψ, ν}` of `MN(A | M, Σε, V) · IW(Σε | Ψ, ν)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MniwParams {
    /// Mean of `A`, `n_ξ × n_φ`.
    #[serde(with = "serde_matrix::matrix")]
    pub mean: DMatrix<f64>,
    /// Column covariance, `n_φ × n_φ`.
    #[serde(with = "serde_matrix::matrix")]
    pub col_cov: DMatrix<f64>,
    /// Inverse-Wishart scale, `n_ξ × n_ξ`.
    #[serde(with = "serde_matrix::matrix")]
    pub scale: DMatrix<f64>,
    /// Degrees of freedom.
    pub dof: f64,
}

impl MniwParams {
    /// Validated constructor.
    ///
    /// Requires `ν > n_ξ − 1` so that the inverse-Wishart is proper. The
    /// stricter `ν > n_ξ + 1` (finite mean of `Σε`) is reported by
    /// [`MniwParams::has_noise_mean`].
    pub fn new(
        mean: DMatrix<f64>,
        col_cov: DMatrix<f64>,
        scale: DMatrix<f64>,
        dof: f64,
    ) -> Result<Self> {
        let p = Self {
            mean,
            col_cov,
            scale,
            dof,
        };
        p.validate()?;
        Ok(p)
    }

    /// Zero mean, `Ψ = a·I`, `ν = n_ξ + n_φ + 1`.
    pub fn noninformative(n_xi: usize, col_cov: DMatrix<f64>, a: f64) -> Result<Self> {
        let n_phi = col_cov.nrows();
        Self::new(
            DMatrix::zeros(n_xi, n_phi),
            col_cov,
            DMatrix::identity(n_xi, n_xi) * a,
            (n_xi + n_phi + 1) as f64,
        )
    }

    pub fn n_xi(&self) -> usize {
        self.mean.nrows()
    }

    pub fn n_phi(&self) -> usize {
        self.mean.ncols()
    }

    pub fn has_noise_mean(&self) -> bool {
        self.dof > self.n_xi() as f64 + 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let (n_xi, n_phi) = self.mean.shape();
        dim_check(self.col_cov.shape() == (n_phi, n_phi), || {
            format!("V is {:?}, expected {n_phi}x{n_phi}", self.col_cov.shape())
        })?;
        dim_check(self.scale.shape() == (n_xi, n_xi), || {
            format!("Psi is {:?}, expected {n_xi}x{n_xi}", self.scale.shape())
        })?;
        if !is_symmetric(&self.col_cov, 1e-12) || LowerFactor::new(&self.col_cov).is_none() {
            return Err(Error::SingularCovariance("V".into()));
        }
        if !is_symmetric(&self.scale, 1e-12) || LowerFactor::new(&self.scale).is_none() {
            return Err(Error::SingularCovariance("Psi".into()));
        }
        if !(self.dof > n_xi as f64 - 1.0) {
            return Err(Error::Domain(format!(
                "nu = {} must exceed n_xi - 1 = {}",
                self.dof,
                n_xi as f64 - 1.0
            )));
        }
        Ok(())
    }
}

/// Sufficient statistics `η = {χ0, χ1, χ2, χ3}`; also used for the
/// trajectory statistics `s0..s3` of a whole path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuffStats {
    /// `n_φ × n_ξ`
    #[serde(with = "serde_matrix::matrix")]
    pub chi0: DMatrix<f64>,
    /// `n_φ × n_φ`
    #[serde(with = "serde_matrix::matrix")]
    pub chi1: DMatrix<f64>,
    /// `n_ξ × n_ξ`
    #[serde(with = "serde_matrix::matrix")]
    pub chi2: DMatrix<f64>,
    pub chi3: f64,
}

impl SuffStats {
    pub fn zeros(n_xi: usize, n_phi: usize) -> Self {
        Self {
            chi0: DMatrix::zeros(n_phi, n_xi),
            chi1: DMatrix::zeros(n_phi, n_phi),
            chi2: DMatrix::zeros(n_xi, n_xi),
            chi3: 0.0,
        }
    }

    pub fn n_xi(&self) -> usize {
        self.chi2.nrows()
    }

    pub fn n_phi(&self) -> usize {
        self.chi1.nrows()
    }

    /// `n_ξ + n_φ + 1 + margin`, the lowest `χ3` forgetting may produce.
    pub fn dof_floor(&self) -> f64 {
        (self.n_xi() + self.n_phi() + 1) as f64 + FORGETTING_FLOOR_MARGIN
    }

    fn check_pair(&self, phi: &DVector<f64>, xi: &DVector<f64>) -> Result<()> {
        dim_check(phi.len() == self.n_phi(), || {
            format!("phi has length {}, expected {}", phi.len(), self.n_phi())
        })?;
        dim_check(xi.len() == self.n_xi(), || {
            format!("xi has length {}, expected {}", xi.len(), self.n_xi())
        })
    }

    fn check_same_shape(&self, other: &SuffStats) -> Result<()> {
        dim_check(
            self.chi0.shape() == other.chi0.shape(),
            || format!("statistics of shape {:?} and {:?}", self.chi0.shape(), other.chi0.shape()),
        )
    }

    /// In-place form of [`posterior_update`].
    pub fn observe(&mut self, phi: &DVector<f64>, xi: &DVector<f64>) -> Result<()> {
        self.check_pair(phi, xi)?;
        self.add_pair(phi, xi, 1.0);
        Ok(())
    }

    /// Remove the contribution of one pair; the inverse of [`SuffStats::observe`].
    pub fn retract(&mut self, phi: &DVector<f64>, xi: &DVector<f64>) -> Result<()> {
        self.check_pair(phi, xi)?;
        self.add_pair(phi, xi, -1.0);
        Ok(())
    }

    fn add_pair(&mut self, phi: &DVector<f64>, xi: &DVector<f64>, sign: f64) {
        self.chi0.ger(sign, phi, xi, 1.0);
        self.chi1.ger(sign, phi, phi, 1.0);
        self.chi2.ger(sign, xi, xi, 1.0);
        self.chi3 += sign;
    }

    /// In-place form of [`forget`].
    pub fn forget_in_place(&mut self, gamma: f64) -> Result<()> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidForgettingFactor(gamma));
        }
        if gamma == 1.0 {
            return Ok(());
        }
        self.chi0 *= gamma;
        self.chi1 *= gamma;
        self.chi2 *= gamma;
        self.chi3 = forgotten_dof(self.chi3, gamma, self.dof_floor());
        Ok(())
    }

    /// Component-wise `self += other`.
    pub fn accumulate(&mut self, other: &SuffStats) -> Result<()> {
        self.check_same_shape(other)?;
        self.chi0 += &other.chi0;
        self.chi1 += &other.chi1;
        self.chi2 += &other.chi2;
        self.chi3 += other.chi3;
        Ok(())
    }

    /// `Σ wᵢ ηᵢ`
    pub fn weighted_sum<'a>(
        items: impl IntoIterator<Item = (f64, &'a SuffStats)>,
    ) -> Option<SuffStats> {
        let mut iter = items.into_iter();
        let (w0, first) = iter.next()?;
        let mut acc = SuffStats {
            chi0: &first.chi0 * w0,
            chi1: &first.chi1 * w0,
            chi2: &first.chi2 * w0,
            chi3: first.chi3 * w0,
        };
        for (w, s) in iter {
            acc.chi0 += &s.chi0 * w;
            acc.chi1 += &s.chi1 * w;
            acc.chi2 += &s.chi2 * w;
            acc.chi3 += s.chi3 * w;
        }
        Some(acc)
    }
}

pub(crate) fn forgotten_dof(chi3: f64, gamma: f64, floor: f64) -> f64 {
    // Never raise a count that was already below the floor.
    (gamma * chi3).max(floor.min(chi3))
}

/// A joint draw of the weight matrix and interface noise covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightNoiseSample {
    /// `n_ξ × n_φ`
    #[serde(with = "serde_matrix::matrix")]
    pub weights: DMatrix<f64>,
    /// `n_ξ × n_ξ`
    #[serde(with = "serde_matrix::matrix")]
    pub noise_cov: DMatrix<f64>,
}

/// `χ0 = V⁻¹Mᵀ, χ1 = V⁻¹, χ2 = M V⁻¹ Mᵀ + Ψ, χ3 = ν`.
pub fn stats_from_params(p: &MniwParams) -> Result<SuffStats> {
    let (n_xi, n_phi) = p.mean.shape();
    dim_check(p.col_cov.shape() == (n_phi, n_phi), || "V does not match M".into())?;
    dim_check(p.scale.shape() == (n_xi, n_xi), || "Psi does not match M".into())?;
    let v_chol = LowerFactor::new_jittered(&p.col_cov)
        .ok_or_else(|| Error::SingularCovariance("V".into()))?;
    let chi1 = v_chol.inverse();
    let chi0 = &chi1 * p.mean.transpose();
    let mut chi2 = &p.mean * &chi0 + &p.scale;
    symmetrize(&mut chi2);
    Ok(SuffStats {
        chi0,
        chi1,
        chi2,
        chi3: p.dof,
    })
}

/// `M = (χ1⁻¹ χ0)ᵀ, V = χ1⁻¹, Ψ = χ2 − χ0ᵀ χ1⁻¹ χ0, ν = χ3`.
pub fn params_from_stats(s: &SuffStats) -> Result<MniwParams> {
    let chol = LowerFactor::new_jittered(&s.chi1).ok_or(Error::SingularStatistics)?;
    let v = chol.inverse();
    let b = &v * &s.chi0;
    let mut psi = &s.chi2 - s.chi0.transpose() * &b;
    symmetrize(&mut psi);
    if LowerFactor::new(&psi).is_none() {
        return Err(Error::DegeneratePosterior("Psi = chi2 - chi0' chi1^-1 chi0".into()));
    }
    if !(s.chi3 > s.n_xi() as f64 - 1.0) {
        return Err(Error::DegeneratePosterior(format!("nu = {}", s.chi3)));
    }
    Ok(MniwParams {
        mean: b.transpose(),
        col_cov: v,
        scale: psi,
        dof: s.chi3,
    })
}

/// Theorem-1 style measurement update with one `(φ, ξ)` pair.
pub fn posterior_update(s: &SuffStats, phi: &DVector<f64>, xi: &DVector<f64>) -> Result<SuffStats> {
    let mut out = s.clone();
    out.observe(phi, xi)?;
    Ok(out)
}

/// Exponential forgetting: every statistic scaled by `γ`, with `χ3` kept at
/// or above [`SuffStats::dof_floor`].
pub fn forget(s: &SuffStats, gamma: f64) -> Result<SuffStats> {
    let mut out = s.clone();
    out.forget_in_place(gamma)?;
    Ok(out)
}

/// `s0 = Σ φ ξᵀ, s1 = Σ φ φᵀ, s2 = Σ ξ ξᵀ, s3 = count`.
pub fn trajectory_stats(
    n_xi: usize,
    n_phi: usize,
    phis: &[DVector<f64>],
    xis: &[DVector<f64>],
) -> Result<SuffStats> {
    dim_check(phis.len() == xis.len(), || {
        format!("{} regressors but {} interface values", phis.len(), xis.len())
    })?;
    let mut s = SuffStats::zeros(n_xi, n_phi);
    for (phi, xi) in phis.iter().zip(xis) {
        s.observe(phi, xi)?;
    }
    Ok(s)
}

/// Component-wise sum of prior and trajectory statistics.
pub fn batch_update(prior: &SuffStats, traj: &SuffStats) -> Result<SuffStats> {
    let mut out = prior.clone();
    out.accumulate(traj)?;
    Ok(out)
}

/// Draw `Σε ~ IW(Ψ, ν)` by the Bartlett construction, then
/// `A = M + chol(Σε) Z chol(V)ᵀ`.
pub fn sample_mniw<R: Rng + ?Sized>(p: &MniwParams, rng: &mut R) -> Result<WeightNoiseSample> {
    let (n_xi, n_phi) = p.mean.shape();
    let noise_cov = sample_inverse_wishart(&p.scale, p.dof, rng)?;
    let sigma_chol = LowerFactor::new_jittered(&noise_cov)
        .ok_or_else(|| Error::SingularCovariance("sampled Sigma_eps".into()))?;
    let v_chol = LowerFactor::new_jittered(&p.col_cov)
        .ok_or_else(|| Error::SingularCovariance("V".into()))?;
    let z = DMatrix::from_fn(n_xi, n_phi, |_, _| rng.sample::<f64, _>(StandardNormal));
    let weights = &p.mean + sigma_chol.l() * z * v_chol.l().transpose();
    Ok(WeightNoiseSample { weights, noise_cov })
}

/// `Σ ~ IW(Ψ, ν)`: with `Ψ = L Lᵀ` and Bartlett factor `B`, `Σ = (L B⁻ᵀ)(L B⁻ᵀ)ᵀ`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    scale: &DMatrix<f64>,
    dof: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    let l = LowerFactor::new_jittered(scale)
        .ok_or_else(|| Error::SingularCovariance("Psi".into()))?;
    let mut bartlett = DMatrix::zeros(p, p);
    for i in 0..p {
        let df = dof - i as f64;
        let chi2 = ChiSquared::new(df)
            .map_err(|_| Error::Domain(format!("chi-square dof {df} for IW draw")))?;
        bartlett[(i, i)] = chi2.sample(rng).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = rng.sample(StandardNormal);
        }
    }
    // B⁻ᵀ is upper triangular; solve Bᵀ X = I.
    let b_inv_t = bartlett
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Numerical("singular Bartlett factor".into()))?;
    let c = l.l() * b_inv_t;
    let mut sigma = &c * c.transpose();
    symmetrize(&mut sigma);
    Ok(sigma)
}

/// Student-t predictive of `ξ` at regressor `φ` under the posterior `s`.
///
/// `ρ = ν − n_ξ + 1`, `μ = Mφ`, `κ = 1/(φᵀVφ)`, `Λ = (κ+1)/(κρ) · Ψ`.
/// A zero regressor gives `κ = ∞` and `Λ = Ψ/ρ`.
pub fn predictive(s: &SuffStats, phi: &DVector<f64>) -> Result<StudentTParams> {
    dim_check(phi.len() == s.n_phi(), || {
        format!("phi has length {}, expected {}", phi.len(), s.n_phi())
    })?;
    predictive_from_params(&params_from_stats(s)?, phi)
}

/// [`predictive`] from the parameters directly. Useful when `V` is so small
/// that the statistics lose `Ψ` to cancellation.
pub fn predictive_from_params(p: &MniwParams, phi: &DVector<f64>) -> Result<StudentTParams> {
    dim_check(phi.len() == p.n_phi(), || {
        format!("phi has length {}, expected {}", phi.len(), p.n_phi())
    })?;
    let q = (phi.transpose() * &p.col_cov * phi)[(0, 0)];
    StudentTParams::from_posterior(&p.mean * phi, q, &p.scale, p.dof)
}

/// Log of the MNIW normalizing constant
/// `g = |Ψ|^{ν/2} / (2^{νn_ξ/2} (2π)^{n_ξn_φ/2} |V|^{n_ξ/2} Γ_{n_ξ}(ν/2))`,
/// evaluated from the statistics.
pub fn log_normalizer(s: &SuffStats) -> Result<f64> {
    let p = params_from_stats(s)?;
    let psi = LowerFactor::new(&p.scale)
        .ok_or_else(|| Error::DegeneratePosterior("Psi".into()))?;
    let chi1 = LowerFactor::new_jittered(&s.chi1).ok_or(Error::SingularStatistics)?;
    Ok(log_normalizer_parts(
        p.dof,
        psi.log_det(),
        -chi1.log_det(),
        s.n_xi(),
        s.n_phi(),
    ))
}

pub(crate) fn log_normalizer_parts(
    dof: f64,
    log_det_scale: f64,
    log_det_col_cov: f64,
    n_xi: usize,
    n_phi: usize,
) -> f64 {
    let nx = n_xi as f64;
    0.5 * dof * log_det_scale
        - 0.5 * dof * nx * LN_2
        - 0.5 * nx * n_phi as f64 * (2.0 * PI).ln()
        - 0.5 * nx * log_det_col_cov
        - ln_multivariate_gamma(n_xi, 0.5 * dof)
}

#[cfg(test)]
mod tests;
