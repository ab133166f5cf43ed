use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::student_t::{sample_with_factor, student_t_log_pdf};
use super::{log_normalizer_parts, params_from_stats, MniwParams, StudentTParams, SuffStats};
use crate::error::{dim_check, Error, Result};
use crate::linalg::{symmetrize, LowerFactor};

/// Sufficient statistics together with the factorizations the particle
/// methods need at every step.
///
/// Keeps `L` with `L Lᵀ = χ1`, the whitened cross term `W = L⁻¹ χ0`, the
/// posterior scale `Ψ = χ2 − Wᵀ W` and its factor. Adding or removing one
/// `(φ, ξ)` pair costs `O(n_φ² n_ξ)` instead of a fresh `O(n_φ³)`
/// factorization, and predictive draws reuse the factor of `Ψ`.
#[derive(Debug, Clone)]
pub struct FactoredPosterior {
    stats: SuffStats,
    chol: LowerFactor,
    whitened: DMatrix<f64>,
    scale: DMatrix<f64>,
    scale_chol: LowerFactor,
}

/// `Mφ` and `φᵀVφ` at one regressor.
#[derive(Debug, Clone)]
pub struct PredictiveMoments {
    pub mean: DVector<f64>,
    pub q: f64,
}

impl FactoredPosterior {
    pub fn from_stats(stats: SuffStats) -> Result<Self> {
        let chol = LowerFactor::new_jittered(&stats.chi1).ok_or(Error::SingularStatistics)?;
        Self::from_factor(stats, chol)
    }

    pub fn from_params(p: &MniwParams) -> Result<Self> {
        Self::from_stats(super::stats_from_params(p)?)
    }

    /// Reuse a known factor of `stats.chi1`.
    pub fn from_factor(stats: SuffStats, chol: LowerFactor) -> Result<Self> {
        dim_check(chol.dim() == stats.n_phi(), || {
            format!("factor of size {} for n_phi = {}", chol.dim(), stats.n_phi())
        })?;
        let whitened = chol.solve_lower_mat(&stats.chi0);
        let (scale, scale_chol) = scale_from(&stats, &whitened)?;
        Ok(Self {
            stats,
            chol,
            whitened,
            scale,
            scale_chol,
        })
    }

    pub fn stats(&self) -> &SuffStats {
        &self.stats
    }

    pub fn into_stats(self) -> SuffStats {
        self.stats
    }

    pub fn n_xi(&self) -> usize {
        self.stats.n_xi()
    }

    pub fn n_phi(&self) -> usize {
        self.stats.n_phi()
    }

    pub fn dof(&self) -> f64 {
        self.stats.chi3
    }

    /// Posterior `Ψ`.
    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    pub fn params(&self) -> Result<MniwParams> {
        params_from_stats(&self.stats)
    }

    pub fn moments(&self, phi: &DVector<f64>) -> Result<PredictiveMoments> {
        dim_check(phi.len() == self.n_phi(), || {
            format!("phi has length {}, expected {}", phi.len(), self.n_phi())
        })?;
        let z = self.chol.solve_lower(phi);
        Ok(PredictiveMoments {
            mean: self.whitened.tr_mul(&z),
            q: z.norm_squared(),
        })
    }

    pub fn predictive(&self, phi: &DVector<f64>) -> Result<StudentTParams> {
        let m = self.moments(phi)?;
        StudentTParams::from_posterior(m.mean, m.q, &self.scale, self.dof())
    }

    fn predictive_factor(&self, q: f64) -> Result<(f64, LowerFactor)> {
        let rho = self.dof() - self.n_xi() as f64 + 1.0;
        if !(rho > 0.0) {
            return Err(Error::DegeneratePosterior(format!("predictive dof {rho}")));
        }
        let mut f = self.scale_chol.clone();
        f.scale((1.0 + q) / rho);
        Ok((rho, f))
    }

    /// Draw `ξ` from the Student-t predictive at `φ`.
    pub fn sample_predictive<R: Rng + ?Sized>(
        &self,
        phi: &DVector<f64>,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let m = self.moments(phi)?;
        let (rho, f) = self.predictive_factor(m.q)?;
        sample_with_factor(rho, &m.mean, &f, rng)
    }

    pub fn predictive_log_pdf(&self, phi: &DVector<f64>, xi: &DVector<f64>) -> Result<f64> {
        let m = self.moments(phi)?;
        dim_check(xi.len() == self.n_xi(), || {
            format!("xi has length {}, expected {}", xi.len(), self.n_xi())
        })?;
        let (rho, f) = self.predictive_factor(m.q)?;
        Ok(student_t_log_pdf(rho, &m.mean, &f, xi))
    }

    pub fn log_normalizer(&self) -> f64 {
        log_normalizer_parts(
            self.dof(),
            self.scale_chol.log_det(),
            -self.chol.log_det(),
            self.n_xi(),
            self.n_phi(),
        )
    }

    pub fn observe(&mut self, phi: &DVector<f64>, xi: &DVector<f64>) -> Result<()> {
        self.stats.observe(phi, xi)?;
        self.chol.rank_one_update(phi);
        self.refresh()
    }

    /// Remove one pair. Falls back to refactoring `χ1` if the downdate
    /// loses positive definiteness.
    pub fn retract(&mut self, phi: &DVector<f64>, xi: &DVector<f64>) -> Result<()> {
        self.stats.retract(phi, xi)?;
        if !self.chol.rank_one_downdate(phi) {
            self.chol =
                LowerFactor::new_jittered(&self.stats.chi1).ok_or(Error::SingularStatistics)?;
        }
        self.refresh()
    }

    /// Add then remove one pair each, as one bookkeeping step.
    pub fn exchange(
        &mut self,
        add: (&DVector<f64>, &DVector<f64>),
        remove: (&DVector<f64>, &DVector<f64>),
    ) -> Result<()> {
        self.stats.observe(add.0, add.1)?;
        self.stats.retract(remove.0, remove.1)?;
        self.chol.rank_one_update(add.0);
        if !self.chol.rank_one_downdate(remove.0) {
            self.chol =
                LowerFactor::new_jittered(&self.stats.chi1).ok_or(Error::SingularStatistics)?;
        }
        self.refresh()
    }

    /// In-place exponential forgetting with the degrees-of-freedom floor.
    pub fn forget(&mut self, gamma: f64) -> Result<()> {
        self.stats.forget_in_place(gamma)?;
        if gamma < 1.0 {
            self.chol.scale(gamma);
            self.whitened *= gamma.sqrt();
            self.scale *= gamma;
            self.scale_chol.scale(gamma);
        }
        Ok(())
    }

    fn refresh(&mut self) -> Result<()> {
        self.whitened = self.chol.solve_lower_mat(&self.stats.chi0);
        let (scale, scale_chol) = scale_from(&self.stats, &self.whitened)?;
        self.scale = scale;
        self.scale_chol = scale_chol;
        Ok(())
    }
}

fn scale_from(stats: &SuffStats, whitened: &DMatrix<f64>) -> Result<(DMatrix<f64>, LowerFactor)> {
    let mut scale = &stats.chi2 - whitened.tr_mul(whitened);
    symmetrize(&mut scale);
    let chol = LowerFactor::new(&scale)
        .ok_or_else(|| Error::DegeneratePosterior("Psi = chi2 - chi0' chi1^-1 chi0".into()))?;
    Ok((scale, chol))
}
