//! Error metrics for learned functions and state trajectories.
//!
//! The learned function is compared with the truth on a midpoint grid over
//! its domain. Each grid point is weighted by the inverse marginal variance
//! `ν / (φᵀVφ Ψ_ii)` of the posterior, so regions the data never visited
//! contribute little. Weights are normalized to average one, which makes
//! uniform weights reduce to the plain grid RMSE.
//!
//! Grids use cell centres. The basis functions vanish on the domain boundary,
//! where the weight would be unbounded.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::casestudies::FunctionTarget;
use crate::conjugate::{params_from_stats, MniwParams, SuffStats};
use crate::error::{dim_check, Error, Result};

pub const DEFAULT_POINTS_PER_DIM: usize = 101;

/// Grid points whose variance is below this fraction of the grid maximum sit
/// on a zero of every basis function (for example the origin of an odd
/// basis). Both the model and any target in its span are pinned there, so
/// they are left out instead of receiving an unbounded weight.
pub const STRUCTURAL_ZERO: f64 = 1e-12;

/// Cell centres of a regular grid over a box, last dimension fastest.
pub fn midpoint_grid(domain: &[(f64, f64)], points_per_dim: usize) -> Result<Vec<Vec<f64>>> {
    if domain.is_empty() || points_per_dim == 0 {
        return Err(Error::EmptyGrid);
    }
    if domain.iter().any(|(lo, hi)| !(hi > lo)) {
        return Err(Error::Config(format!("degenerate grid domain {domain:?}")));
    }
    let axes: Vec<Vec<f64>> = domain
        .iter()
        .map(|&(lo, hi)| {
            let h = (hi - lo) / points_per_dim as f64;
            (0..points_per_dim).map(|k| lo + (k as f64 + 0.5) * h).collect()
        })
        .collect();
    let total = points_per_dim.pow(domain.len() as u32);
    Ok((0..total)
        .map(|mut flat| {
            let mut p = vec![0.0; domain.len()];
            for d in (0..domain.len()).rev() {
                p[d] = axes[d][flat % points_per_dim];
                flat /= points_per_dim;
            }
            p
        })
        .collect())
}

/// Grid geometry with the regressors and truth values precomputed.
#[derive(Debug, Clone)]
pub struct GridLayout {
    pub points: Vec<Vec<f64>>,
    /// `n_φ × G`
    pub regressors: DMatrix<f64>,
    /// Entries of `ξ` reported on this grid.
    pub outputs: Vec<usize>,
    /// Truth per point for each entry of `outputs`.
    pub truth: Option<Vec<Vec<f64>>>,
}

impl GridLayout {
    pub fn new(target: &FunctionTarget, points_per_dim: usize) -> Result<Self> {
        let points = midpoint_grid(&target.domain, points_per_dim)?;
        let cols: Vec<DVector<f64>> = points.par_iter().map(|p| (target.regressor)(p)).collect();
        let n_phi = cols[0].len();
        let regressors = DMatrix::from_fn(n_phi, cols.len(), |r, c| cols[c][r]);
        let truth = target.truth.as_ref().map(|f| {
            points
                .par_iter()
                .map(|p| {
                    let v = f(p);
                    target.outputs.iter().map(|&i| v[i]).collect()
                })
                .collect()
        });
        Ok(Self {
            points,
            regressors,
            outputs: target.outputs.clone(),
            truth,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Posterior mean and marginal variance at every grid point.
    pub fn evaluate(&self, stats: &SuffStats) -> Result<FunctionGrid> {
        self.evaluate_params(&params_from_stats(stats)?)
    }

    pub fn evaluate_params(&self, p: &MniwParams) -> Result<FunctionGrid> {
        dim_check(p.n_phi() == self.regressors.nrows(), || {
            format!("posterior has {} regressors, grid {}", p.n_phi(), self.regressors.nrows())
        })?;
        if let Some(&i) = self.outputs.iter().find(|&&i| i >= p.n_xi()) {
            return Err(Error::Dimension(format!("output {i} of a {}-dimensional ξ", p.n_xi())));
        }
        let means = &p.mean * &self.regressors;
        let vphi = &p.col_cov * &self.regressors;
        let mut mean = Vec::with_capacity(self.len());
        let mut variance = Vec::with_capacity(self.len());
        for g in 0..self.len() {
            let q = self.regressors.column(g).dot(&vphi.column(g));
            if !(q >= 0.0) {
                return Err(Error::Numerical(format!("negative prior variance {q} at grid point {g}")));
            }
            mean.push(self.outputs.iter().map(|&i| means[(i, g)]).collect());
            variance.push(self.outputs.iter().map(|&i| q * p.scale[(i, i)] / p.dof).collect());
        }
        Ok(FunctionGrid {
            points: self.points.clone(),
            outputs: self.outputs.clone(),
            mean,
            variance,
            truth: self.truth.clone(),
        })
    }
}

/// A learned function on a grid: posterior mean `Mφ(z)` and marginal variance
/// `φᵀVφ Ψ_ii / ν` per reported output.
#[derive(Debug, Clone)]
pub struct FunctionGrid {
    pub points: Vec<Vec<f64>>,
    pub outputs: Vec<usize>,
    pub mean: Vec<Vec<f64>>,
    pub variance: Vec<Vec<f64>>,
    pub truth: Option<Vec<Vec<f64>>>,
}

impl FunctionGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `w_i = ν / (φᵀVφ Ψ_ii)` for every output.
pub fn marginal_weight(s: &SuffStats, phi: &DVector<f64>) -> Result<DVector<f64>> {
    let p = params_from_stats(s)?;
    dim_check(phi.len() == p.n_phi(), || format!("φ of length {} for {} regressors", phi.len(), p.n_phi()))?;
    let q = phi.dot(&(&p.col_cov * phi));
    if !(q > 0.0) {
        return Err(Error::Numerical(format!("marginal variance vanishes (φᵀVφ = {q})")));
    }
    Ok(DVector::from_fn(p.n_xi(), |i, _| p.dof / (q * p.scale[(i, i)])))
}

/// `sqrt(Σ w e² / Σ w)` over the grid.
pub fn weighted_rmse(errors: &[f64], weights: &[f64]) -> Result<f64> {
    dim_check(errors.len() == weights.len(), || {
        format!("{} errors, {} weights", errors.len(), weights.len())
    })?;
    if errors.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let (num, den) = errors
        .iter()
        .zip(weights)
        .fold((0.0, 0.0), |(n, d), (e, w)| (n + w * e * e, d + w));
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::Numerical(format!("grid weights sum to {den}")));
    }
    Ok((num / den).sqrt())
}

/// wRMSE of every reported output, weights `1 / variance`.
pub fn wrmse(grid: &FunctionGrid) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let truth = grid
        .truth
        .as_ref()
        .ok_or_else(|| Error::Config("grid has no truth values".into()))?;
    (0..grid.outputs.len())
        .map(|o| {
            let vmax = grid.variance.iter().map(|v| v[o]).fold(0.0, f64::max);
            if !(vmax > 0.0) {
                return Err(Error::Numerical("marginal variance vanishes on the whole grid".into()));
            }
            let mut errors = Vec::with_capacity(grid.len());
            let mut weights = Vec::with_capacity(grid.len());
            for g in 0..grid.len() {
                let v = grid.variance[g][o];
                if v <= STRUCTURAL_ZERO * vmax {
                    continue;
                }
                errors.push(truth[g][o] - grid.mean[g][o]);
                weights.push(1.0 / v);
            }
            weighted_rmse(&errors, &weights)
        })
        .collect()
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    dim_check(a.len() == b.len(), || format!("sequences of length {} and {}", a.len(), b.len()))?;
    if a.is_empty() {
        return Err(Error::Config("RMSE of empty sequences".into()));
    }
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((sse / a.len() as f64).sqrt())
}

/// RMSE over all components of two vector sequences.
pub fn rmse_vectors(a: &[DVector<f64>], b: &[DVector<f64>]) -> Result<f64> {
    dim_check(a.len() == b.len(), || format!("sequences of length {} and {}", a.len(), b.len()))?;
    let flat = |v: &[DVector<f64>]| v.iter().flat_map(|x| x.iter().copied()).collect::<Vec<_>>();
    rmse(&flat(a), &flat(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_grid_layout() {
        let g = midpoint_grid(&[(0.0, 1.0), (-1.0, 1.0)], 2).unwrap();
        assert_eq!(g, vec![vec![0.25, -0.5], vec![0.25, 0.5], vec![0.75, -0.5], vec![0.75, 0.5]]);
        assert!(matches!(midpoint_grid(&[], 3), Err(Error::EmptyGrid)));
        assert!(matches!(midpoint_grid(&[(0.0, 1.0)], 0), Err(Error::EmptyGrid)));
    }

    #[test]
    fn uniform_weights_reduce_to_rmse() {
        let e = [0.3, -1.0, 2.0];
        let r = rmse(&e, &[0.0; 3]).unwrap();
        assert!((weighted_rmse(&e, &[1.0; 3]).unwrap() - r).abs() < 1e-15);
        assert!((weighted_rmse(&e, &[7.0; 3]).unwrap() - r).abs() < 1e-15);
    }

    #[test]
    fn rmse_constant_offset() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }
}
