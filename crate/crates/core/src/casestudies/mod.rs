//! Simulated and recorded testbeds: a nonlinear single-mass oscillator, a
//! single-track vehicle with magic-formula tires, an electro-mechanical
//! positioning system, and a scalar linear system for sanity checks.

pub mod emps;
pub mod linear;
pub mod oscillator;
pub mod vehicle;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::basis::{prior_column_covariance, HilbertBasisConfig, KernelSpec};
use crate::conjugate::MniwParams;
use crate::error::Result;
use crate::ssm::{Dataset, ModelSpec};

/// A simulated run with its ground truth.
#[derive(Debug, Clone, Default)]
pub struct Simulation {
    pub dt: f64,
    pub xs: Vec<DVector<f64>>,
    pub us: Vec<DVector<f64>>,
    pub ys: Vec<DVector<f64>>,
    /// Interface values along the path.
    pub xis: Vec<DVector<f64>>,
}

impl Simulation {
    pub fn dataset(&self) -> Dataset {
        Dataset {
            ys: self.ys.clone(),
            us: self.us.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Hilbert basis and prior hyperparameters of a case study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisHyper {
    /// Per-dimension domain half-lengths `L_i`.
    pub half_lengths: Vec<f64>,
    /// Total number of basis functions per learned function input.
    pub n_phi: usize,
    pub sigma2: f64,
    /// `None` picks `2 L / n_φ` from the first dimension.
    #[serde(default)]
    pub lengthscale: Option<f64>,
    /// Inverse-Wishart scale `Ψ = a I`.
    pub a: f64,
    /// Use only odd basis functions (one-dimensional inputs only).
    #[serde(default)]
    pub antisymmetric: bool,
    /// Prior degrees of freedom; `None` gives `n_ξ + n_φ + 1`.
    #[serde(default)]
    pub dof: Option<f64>,
    /// Error grids cover `± eval_fraction · L_i`. The basis functions vanish
    /// at `± L_i`, so the inverse-variance weights are singular at the edge.
    #[serde(default = "default_eval_fraction")]
    pub eval_fraction: f64,
}

pub const DEFAULT_EVAL_FRACTION: f64 = 0.8;

fn default_eval_fraction() -> f64 {
    DEFAULT_EVAL_FRACTION
}

impl BasisHyper {
    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
            .unwrap_or(2.0 * self.half_lengths[0] / self.n_phi as f64)
    }

    pub fn basis(&self) -> Result<HilbertBasisConfig> {
        if self.antisymmetric {
            if self.half_lengths.len() != 1 {
                return Err(crate::Error::Config(
                    "anti-symmetric bases are one-dimensional".into(),
                ));
            }
            HilbertBasisConfig::antisymmetric(self.half_lengths[0], self.n_phi)
        } else {
            HilbertBasisConfig::smallest(self.half_lengths.clone(), self.n_phi)
        }
    }

    /// Box on which learned functions are scored.
    pub fn eval_domain(&self) -> Vec<(f64, f64)> {
        self.half_lengths
            .iter()
            .map(|&l| (-self.eval_fraction * l, self.eval_fraction * l))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_lengths.is_empty() || self.half_lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(crate::Error::Config("half_lengths must be positive".into()));
        }
        if self.n_phi == 0 {
            return Err(crate::Error::Config("n_phi must be at least 1".into()));
        }
        if !(self.sigma2 > 0.0) || !(self.lengthscale() > 0.0) || !(self.a > 0.0) {
            return Err(crate::Error::Config("sigma2, lengthscale and a must be positive".into()));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction <= 1.0) {
            return Err(crate::Error::Config(format!("eval_fraction {} outside (0, 1]", self.eval_fraction)));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        KernelSpec::squared_exponential(self.sigma2, vec![self.lengthscale()])
    }

    /// `M = 0`, `V = diag(S)` repeated over `blocks` stacked bases, `Ψ = aI`.
    pub fn prior(&self, n_xi: usize, blocks: usize) -> Result<MniwParams> {
        self.validate()?;
        let v = prior_column_covariance(&self.basis()?, &self.kernel()?)?;
        let n = v.nrows();
        let mut col_cov = nalgebra::DMatrix::zeros(n * blocks, n * blocks);
        for b in 0..blocks {
            col_cov.view_mut((b * n, b * n), (n, n)).copy_from(&v);
        }
        let mut p = MniwParams::noninformative(n_xi, col_cov, self.a)?;
        if let Some(dof) = self.dof {
            p.dof = dof;
            p.validate()?;
        }
        Ok(p)
    }
}

/// A learned function that can be compared with the truth on a grid.
#[derive(Clone)]
pub struct FunctionTarget {
    /// Box `[lo_i, hi_i]` of the function input.
    pub domain: Vec<(f64, f64)>,
    /// Regressor at a function input `z`.
    pub regressor: Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>,
    /// True interface value at `z`, if known.
    pub truth: Option<Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>>,
    /// Which outputs of `ξ` this function covers.
    pub outputs: Vec<usize>,
}

impl std::fmt::Debug for FunctionTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionTarget")
            .field("domain", &self.domain)
            .field("outputs", &self.outputs)
            .finish_non_exhaustive()
    }
}

/// Everything an experiment needs: model, prior, data and ground truth.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ModelSpec,
    pub prior: MniwParams,
    pub data: Dataset,
    pub dt: f64,
    pub true_states: Option<Vec<DVector<f64>>>,
    pub true_xis: Option<Vec<DVector<f64>>>,
    pub functions: Vec<FunctionTarget>,
}
