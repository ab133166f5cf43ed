use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{dim_check, Error, Result};
use crate::linalg::LowerFactor;
use crate::serde_matrix;

/// Multivariate Student-t `T(ξ | ρ, μ, Λ)` predictive of the interface variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentTParams {
    pub rho: f64,
    #[serde(with = "serde_matrix::vector")]
    pub mu: DVector<f64>,
    #[serde(with = "serde_matrix::matrix")]
    pub lambda: DMatrix<f64>,
    /// `1/(φᵀVφ)`; infinite for a regressor with zero prior variance.
    pub kappa: f64,
}

impl StudentTParams {
    /// Builds the predictive from `μ = Mφ`, `q = φᵀVφ`, `Ψ` and `ν`.
    pub(crate) fn from_posterior(
        mu: DVector<f64>,
        q: f64,
        scale: &DMatrix<f64>,
        dof: f64,
    ) -> Result<Self> {
        if !(q >= 0.0) {
            return Err(Error::Numerical(format!("phi' V phi = {q}; V is not positive definite")));
        }
        let rho = dof - scale.nrows() as f64 + 1.0;
        if !(rho > 0.0) {
            return Err(Error::DegeneratePosterior(format!("predictive dof {rho}")));
        }
        // (κ+1)/(κρ) = (1+q)/ρ, finite at q = 0.
        let lambda = scale * ((1.0 + q) / rho);
        Ok(Self {
            rho,
            mu,
            lambda,
            kappa: 1.0 / q,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `Λ ρ/(ρ−2)`, defined for `ρ > 2`.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        (self.rho > 2.0).then(|| &self.lambda * (self.rho / (self.rho - 2.0)))
    }

    pub fn log_pdf(&self, xi: &DVector<f64>) -> Result<f64> {
        dim_check(xi.len() == self.dim(), || {
            format!("xi has length {}, expected {}", xi.len(), self.dim())
        })?;
        let chol = LowerFactor::new(&self.lambda)
            .ok_or_else(|| Error::Numerical("Student-t scale is not positive definite".into()))?;
        Ok(student_t_log_pdf(self.rho, &self.mu, &chol, xi))
    }
}

pub(crate) fn student_t_log_pdf(
    rho: f64,
    mu: &DVector<f64>,
    chol: &LowerFactor,
    xi: &DVector<f64>,
) -> f64 {
    let p = mu.len() as f64;
    let z = chol.solve_lower(&(xi - mu));
    let maha = z.norm_squared();
    ln_gamma(0.5 * (rho + p)) - ln_gamma(0.5 * rho) - 0.5 * p * (rho * PI).ln() - 0.5 * chol.log_det()
        - 0.5 * (rho + p) * (maha / rho).ln_1p()
}

/// Scale-mixture draw: `w ~ χ²(ρ)/ρ`, `ξ = μ + chol(Λ) z / √w`.
pub fn sample_student_t<R: Rng + ?Sized>(p: &StudentTParams, rng: &mut R) -> Result<DVector<f64>> {
    let chol = LowerFactor::new_jittered(&p.lambda)
        .ok_or_else(|| Error::Numerical("Student-t scale is not positive definite".into()))?;
    sample_with_factor(p.rho, &p.mu, &chol, rng)
}

pub(crate) fn sample_with_factor<R: Rng + ?Sized>(
    rho: f64,
    mu: &DVector<f64>,
    chol: &LowerFactor,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chi2 = ChiSquared::new(rho).map_err(|_| Error::Domain(format!("Student-t dof {rho}")))?;
    let w = chi2.sample(rng) / rho;
    let z = DVector::from_fn(mu.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mu + chol.mul_vec(&z) / w.sqrt())
}
