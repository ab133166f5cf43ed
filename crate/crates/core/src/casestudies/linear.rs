//! Scalar linear system `x' = a x + ξ(x) + ω`, `y = x + e`, with the true
//! interface `ξ(x) = b x`. The learned function is a one-dimensional basis
//! expansion of `b x`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::{BasisHyper, FunctionTarget, Problem, Simulation};
use crate::basis::{eval_basis, state_features, BasisExpansion};
use crate::error::{Error, Result};
use crate::ssm::{InitSpec, ModelSpec, Xi0Policy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub r: f64,
    pub len: usize,
    pub x0_var: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            a: 0.8,
            b: -0.2,
            q: 0.1,
            r: 0.1,
            len: 300,
            x0_var: 0.5,
        }
    }
}

impl LinearConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0) || !(self.r > 0.0) || !(self.x0_var >= 0.0) {
            return Err(Error::Config("linear case needs q > 0, r > 0, x0_var >= 0".into()));
        }
        if !((self.a + self.b).abs() < 1.0) {
            return Err(Error::Config(format!("a + b = {} is not stable", self.a + self.b)));
        }
        if self.len < 2 {
            return Err(Error::Config("linear case needs at least two samples".into()));
        }
        Ok(())
    }
}

pub fn default_hyper() -> BasisHyper {
    BasisHyper {
        half_lengths: vec![4.0],
        n_phi: 8,
        sigma2: 1.0,
        lengthscale: Some(2.0),
        a: 0.1,
        antisymmetric: false,
        dof: Some(1.0),
        eval_fraction: super::DEFAULT_EVAL_FRACTION,
    }
}

pub fn simulate<R: Rng + ?Sized>(cfg: &LinearConfig, rng: &mut R) -> Result<Simulation> {
    cfg.validate()?;
    let mut sim = Simulation {
        dt: 1.0,
        ..Default::default()
    };
    let mut n = || rng.sample::<f64, _>(rand_distr::StandardNormal);
    let mut x = cfg.x0_var.sqrt() * n();
    for _ in 0..cfg.len {
        sim.xs.push(DVector::from_element(1, x));
        sim.xis.push(DVector::from_element(1, cfg.b * x));
        sim.ys.push(DVector::from_element(1, x + cfg.r.sqrt() * n()));
        sim.us.push(DVector::zeros(0));
        x = (cfg.a + cfg.b) * x + cfg.q.sqrt() * n();
    }
    Ok(sim)
}

pub fn model(cfg: &LinearConfig, hyper: &BasisHyper) -> Result<ModelSpec> {
    cfg.validate()?;
    let a = cfg.a;
    ModelSpec::builder(1, 1, 1, 0)
        .transition(move |x, xi, _| DVector::from_element(1, a * x[0] + xi[0]))
        .measurement(|x, _| x.clone())
        .basis(BasisExpansion::new(hyper.basis()?, state_features(vec![0])))
        .process_noise(DMatrix::from_element(1, 1, cfg.q))
        .measurement_noise(DMatrix::from_element(1, 1, cfg.r))
        .init(InitSpec::new(DVector::zeros(1), DMatrix::from_element(1, 1, cfg.x0_var), Xi0Policy::PriorPredictive)?)
        .build()
}

pub fn problem<R: Rng + ?Sized>(cfg: &LinearConfig, hyper: &BasisHyper, rng: &mut R) -> Result<Problem> {
    let sim = simulate(cfg, rng)?;
    let basis = hyper.basis()?;
    let b = cfg.b;
    Ok(Problem {
        spec: model(cfg, hyper)?,
        prior: hyper.prior(1, 1)?,
        data: sim.dataset(),
        dt: 1.0,
        true_states: Some(sim.xs),
        true_xis: Some(sim.xis),
        functions: vec![FunctionTarget {
            domain: hyper.eval_domain(),
            regressor: Arc::new(move |z| eval_basis(&basis, z)),
            truth: Some(Arc::new(move |z| DVector::from_element(1, b * z[0]))),
            outputs: vec![0],
        }],
    })
}
