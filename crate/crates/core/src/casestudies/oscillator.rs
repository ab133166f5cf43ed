//! Mass on a nonlinear spring and damper, excited by force steps; only the
//! displacement is measured. The combined spring-damper force is learned.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::{BasisHyper, FunctionTarget, Problem, Simulation};
use crate::basis::{eval_basis, state_features, BasisExpansion};
use crate::error::{Error, Result};
use crate::ssm::{rk4_unchecked, GaussianNoise, InitSpec, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceStep {
    /// Switch-on time [s].
    pub start: f64,
    /// Force held from `start` until the next step [N].
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscillatorConfig {
    pub m: f64,
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    pub dt: f64,
    pub duration: f64,
    pub steps: Vec<ForceStep>,
    /// Diagonal of `Σω` for `[s, ṡ]`.
    pub process_noise: [f64; 2],
    /// Variance of the displacement measurement.
    pub measurement_noise: f64,
    pub x0: [f64; 2],
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        Self {
            m: 2.0,
            c1: 1.5,
            c2: 0.05,
            d1: 2.0,
            d2: 0.4,
            dt: 0.02,
            duration: 15.0,
            steps: vec![
                ForceStep { start: 0.0, force: 0.0 },
                ForceStep { start: 0.5, force: 6.0 },
                ForceStep { start: 4.0, force: -5.0 },
                ForceStep { start: 8.0, force: 4.0 },
                ForceStep { start: 11.5, force: -3.0 },
            ],
            process_noise: [1e-6, 1e-4],
            measurement_noise: 1e-4,
            x0: [0.0, 0.0],
        }
    }
}

impl OscillatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) {
            return Err(Error::Config(format!("mass {} must be positive", self.m)));
        }
        if !(self.dt > 0.0) || !(self.duration > 0.0) {
            return Err(Error::Config("dt and duration must be positive".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }

    /// Applied force at time `t`.
    pub fn force_at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.start <= t + 1e-12)
            .last()
            .map_or(0.0, |s| s.force)
    }
}

/// Default basis hyperparameters: `L = 7.5` per dimension, 41 functions,
/// `σ² = 10`, `ℓ = 2L / 41`, `a = 40`, and `ν = n_ξ` so the early predictive
/// draws of `ξ` are wide enough to explore.
pub fn default_hyper() -> BasisHyper {
    BasisHyper {
        half_lengths: vec![7.5, 7.5],
        n_phi: 41,
        sigma2: 10.0,
        lengthscale: None,
        a: 40.0,
        antisymmetric: false,
        dof: Some(1.0),
        eval_fraction: super::DEFAULT_EVAL_FRACTION,
    }
}

/// `F_sd = c1 s + c2 s³ + d1 ṡ / (1 + d2 ṡ tanh ṡ)`.
pub fn oscillator_target(s: f64, sdot: f64, cfg: &OscillatorConfig) -> f64 {
    let spring = cfg.c1 * s + cfg.c2 * s.powi(3);
    let damper = cfg.d1 * sdot / (1.0 + cfg.d2 * sdot * sdot.tanh());
    spring + damper
}

fn dynamics(x: &DVector<f64>, force: f64, f_sd: f64, m: f64) -> DVector<f64> {
    DVector::from_vec(vec![x[1], (force - f_sd) / m])
}

/// RK4 with the true force at every stage, plus additive process noise.
pub fn simulate<R: Rng + ?Sized>(cfg: &OscillatorConfig, rng: &mut R) -> Result<Simulation> {
    cfg.validate()?;
    let omega = GaussianNoise::diagonal(&cfg.process_noise, "oscillator process noise");
    let e_std = cfg.measurement_noise.sqrt();
    let n = cfg.n_steps();
    let mut sim = Simulation {
        dt: cfg.dt,
        ..Default::default()
    };
    let mut x = DVector::from_row_slice(&cfg.x0);
    for k in 0..n {
        let t = k as f64 * cfg.dt;
        let u = DVector::from_element(1, cfg.force_at(t));
        let e: f64 = rng.sample(rand_distr::StandardNormal);
        sim.ys.push(DVector::from_element(1, x[0] + e_std * e));
        sim.xis.push(DVector::from_element(1, oscillator_target(x[0], x[1], cfg)));
        sim.xs.push(x.clone());
        sim.us.push(u.clone());
        let next = rk4_unchecked(
            |x: &DVector<f64>, u: &DVector<f64>| dynamics(x, u[0], oscillator_target(x[0], x[1], cfg), cfg.m),
            &x,
            &u,
            cfg.dt,
        );
        x = match &omega {
            Ok(w) => next + w.sample(rng),
            Err(_) => next,
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("oscillator diverged at step {k}")));
        }
    }
    Ok(sim)
}

/// Inference model: RK4 of the known dynamics with `ξ ≈ F_sd` held over each step.
pub fn model(cfg: &OscillatorConfig, hyper: &BasisHyper) -> Result<ModelSpec> {
    cfg.validate()?;
    let m = cfg.m;
    let dt = cfg.dt;
    let expansion = BasisExpansion::new(hyper.basis()?, state_features(vec![0, 1]));
    let x0 = DVector::from_row_slice(&cfg.x0);
    ModelSpec::builder(2, 1, 1, 1)
        .transition(move |x, xi, u| {
            let f_sd = xi[0];
            rk4_unchecked(|x: &DVector<f64>, u: &DVector<f64>| dynamics(x, u[0], f_sd, m), x, u, dt)
        })
        .measurement(|x, _| DVector::from_element(1, x[0]))
        .basis(expansion)
        .process_noise(DMatrix::from_diagonal(&DVector::from_row_slice(&cfg.process_noise)))
        .measurement_noise(DMatrix::from_element(1, 1, cfg.measurement_noise))
        .init(InitSpec::new(x0, DMatrix::from_diagonal(&DVector::from_row_slice(&cfg.process_noise)), crate::ssm::Xi0Policy::PriorPredictive)?)
        .build()
}

pub fn problem<R: Rng + ?Sized>(cfg: &OscillatorConfig, hyper: &BasisHyper, rng: &mut R) -> Result<Problem> {
    let sim = simulate(cfg, rng)?;
    let spec = model(cfg, hyper)?;
    let prior = hyper.prior(1, 1)?;
    let basis = hyper.basis()?;
    let truth_cfg = cfg.clone();
    let domain = hyper.eval_domain();
    Ok(Problem {
        spec,
        prior,
        data: sim.dataset(),
        dt: sim.dt,
        true_states: Some(sim.xs),
        true_xis: Some(sim.xis),
        functions: vec![FunctionTarget {
            domain,
            regressor: Arc::new(move |z| eval_basis(&basis, z)),
            truth: Some(Arc::new(move |z| {
                DVector::from_element(1, oscillator_target(z[0], z[1], &truth_cfg))
            })),
            outputs: vec![0],
        }],
    })
}
