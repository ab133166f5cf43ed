//! Lateral single-track vehicle with magic-formula tires. The friction
//! coefficients of both axles are learned as functions of their slip angles.
//!
//! The measured lateral acceleration depends on the unknown friction, which
//! a measurement function `h(x, u)` cannot see. The inference model therefore
//! carries the previous lateral velocity as a third state and measures the
//! backward difference `(v_y − v_y,prev) / Δt`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use super::{BasisHyper, FunctionTarget, Problem, Simulation};
use crate::basis::eval_basis;
use crate::error::{Error, Result};
use crate::ssm::{rk4_unchecked, GaussianNoise, InitSpec, ModelSpec, Xi0Policy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TireParams {
    /// Peak friction `μ̄`.
    pub mu_max: f64,
    /// Stiffness factor.
    pub b: f64,
    /// Shape factor.
    pub c: f64,
    /// Curvature factor.
    pub e: f64,
}

impl Default for TireParams {
    fn default() -> Self {
        Self {
            mu_max: 0.9,
            b: 10.0,
            c: 1.9,
            e: 0.97,
        }
    }
}

/// `μ̄ sin(C atan(ζ − E(ζ − atan ζ)))` with `ζ = B tan α`.
pub fn magic_formula(alpha: f64, tire: &TireParams) -> Result<f64> {
    if !(alpha.abs() < FRAC_PI_2) {
        return Err(Error::Domain(format!("slip angle {alpha} outside (-pi/2, pi/2)")));
    }
    let z = tire.b * alpha.tan();
    Ok(tire.mu_max * (tire.c * (z - tire.e * (z - z.atan())).atan()).sin())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    pub m: f64,
    pub izz: f64,
    pub lf: f64,
    pub lr: f64,
    pub fz_f: f64,
    pub fz_r: f64,
    pub mu_x: f64,
    pub tire: TireParams,
    pub dt: f64,
    pub duration: f64,
    /// Constant longitudinal speed [m/s].
    pub vx: f64,
    /// Steering `δ(t) = (a0 + (a1 − a0) t / T) sin(2π f t)`.
    pub steer_start: f64,
    pub steer_end: f64,
    pub steer_freq: f64,
    /// Diagonal of `Σω` for `[v_y, ψ̇]`.
    pub process_noise: [f64; 2],
    /// Variance of the copied previous lateral velocity in the inference model.
    pub lag_noise: f64,
    /// Diagonal of `Σe` for `[v̇_y, ψ̇]`.
    pub measurement_noise: [f64; 2],
}

impl Default for VehicleConfig {
    fn default() -> Self {
        let m = 1720.0;
        let (lf, lr) = (1.2, 1.5);
        let g = 9.81;
        Self {
            m,
            izz: 1827.0,
            lf,
            lr,
            fz_f: m * g * lr / (lf + lr),
            fz_r: m * g * lf / (lf + lr),
            mu_x: 0.0,
            tire: TireParams::default(),
            dt: 0.02,
            duration: 30.0,
            vx: 15.0,
            steer_start: 0.02,
            steer_end: 0.15,
            steer_freq: 0.25,
            process_noise: [1e-6, 1e-6],
            lag_noise: 1e-10,
            measurement_noise: [1e-2, 1e-5],
        }
    }
}

impl VehicleConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.m, self.izz, self.lf, self.lr, self.fz_f, self.fz_r, self.tire.b, self.tire.c, self.dt, self.duration];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("vehicle masses, lengths, loads, B, C, dt and duration must be positive".into()));
        }
        if !(self.vx > 0.0) {
            return Err(Error::Config("longitudinal speed must be positive".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }

    pub fn steering(&self, t: f64) -> f64 {
        let amp = self.steer_start + (self.steer_end - self.steer_start) * t / self.duration;
        amp * (2.0 * std::f64::consts::PI * self.steer_freq * t).sin()
    }

    /// Front and rear slip angles at state `[v_y, ψ̇, …]` and input `[v_x, δ]`.
    pub fn slip_angles(&self, x: &DVector<f64>, u: &DVector<f64>) -> (f64, f64) {
        let (vy, r, vx, delta) = (x[0], x[1], u[0], u[1]);
        let af = delta - ((vy + self.lf * r) / vx).atan();
        let ar = -((vy - self.lr * r) / vx).atan();
        (af, ar)
    }

    /// `[v̇_y, ψ̈]` for friction coefficients `mu = (μ_f, μ_r)`.
    pub fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, mu: (f64, f64)) -> DVector<f64> {
        let (r, vx, delta) = (x[1], u[0], u[1]);
        let (mf, mr) = mu;
        let (s, c) = delta.sin_cos();
        let vy_dot = (self.fz_f * mf * c + self.fz_r * mr + self.fz_r * self.mu_x * s) / self.m - vx * r;
        let r_dot = (self.lf * self.fz_f * mf * c - self.lr * self.fz_r * mr + self.lf * self.fz_f * self.mu_x * s) / self.izz;
        DVector::from_vec(vec![vy_dot, r_dot])
    }

    /// True friction at the current slip angles.
    pub fn true_friction(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(f64, f64)> {
        let (af, ar) = self.slip_angles(x, u);
        Ok((magic_formula(af, &self.tire)?, magic_formula(ar, &self.tire)?))
    }
}

/// Twenty odd basis functions per axle on `|α| ≤ 0.25`.
pub fn default_hyper() -> BasisHyper {
    BasisHyper {
        half_lengths: vec![0.25],
        n_phi: 20,
        sigma2: 1.0,
        lengthscale: Some(0.05),
        a: 0.1,
        antisymmetric: true,
        dof: Some(2.0),
        eval_fraction: super::DEFAULT_EVAL_FRACTION,
    }
}

/// Simulate `[v_y, ψ̇]` with measurements `[v̇_y, ψ̇]` and true `ξ = (μ_f, μ_r)`.
pub fn simulate<R: Rng + ?Sized>(cfg: &VehicleConfig, rng: &mut R) -> Result<Simulation> {
    cfg.validate()?;
    let omega = GaussianNoise::diagonal(&cfg.process_noise, "vehicle process noise").ok();
    let e_std = [cfg.measurement_noise[0].sqrt(), cfg.measurement_noise[1].sqrt()];
    let mut sim = Simulation {
        dt: cfg.dt,
        ..Default::default()
    };
    let mut x = DVector::zeros(2);
    for k in 0..cfg.n_steps() {
        let t = k as f64 * cfg.dt;
        let u = DVector::from_vec(vec![cfg.vx, cfg.steering(t)]);
        let mu = cfg.true_friction(&x, &u)?;
        let d = cfg.dynamics(&x, &u, mu);
        let e: [f64; 2] = [rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal)];
        sim.ys.push(DVector::from_vec(vec![d[0] + e_std[0] * e[0], x[1] + e_std[1] * e[1]]));
        sim.xis.push(DVector::from_vec(vec![mu.0, mu.1]));
        sim.xs.push(x.clone());
        sim.us.push(u.clone());
        let bad = std::cell::Cell::new(None);
        let next = rk4_unchecked(
            |x: &DVector<f64>, u: &DVector<f64>| match cfg.true_friction(x, u) {
                Ok(mu) => cfg.dynamics(x, u, mu),
                Err(e) => {
                    bad.set(Some(e));
                    DVector::zeros(2)
                }
            },
            &x,
            &u,
            cfg.dt,
        );
        if let Some(e) = bad.into_inner() {
            return Err(e);
        }
        x = match &omega {
            Some(w) => next + w.sample(rng),
            None => next,
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("vehicle diverged at step {k}")));
        }
    }
    Ok(sim)
}

/// Inference model on `[v_y, ψ̇, v_y,prev]` with `ξ = (μ_f, μ_r)` held over each step.
pub fn model(cfg: &VehicleConfig, hyper: &BasisHyper) -> Result<ModelSpec> {
    cfg.validate()?;
    let basis = hyper.basis()?;
    let n = basis.n_phi();
    let dyn_cfg = cfg.clone();
    let phi_cfg = cfg.clone();
    let dt = cfg.dt;
    let pn = &cfg.process_noise;
    ModelSpec::builder(3, 2, 2, 2)
        .transition(move |x, xi, u| {
            let mu = (xi[0], xi[1]);
            let planar = x.rows(0, 2).into_owned();
            let next = rk4_unchecked(|x: &DVector<f64>, u: &DVector<f64>| dyn_cfg.dynamics(x, u, mu), &planar, u, dt);
            DVector::from_vec(vec![next[0], next[1], x[0]])
        })
        .measurement(move |x, _| DVector::from_vec(vec![(x[0] - x[2]) / dt, x[1]]))
        .regressor(2 * n, move |x, u| {
            let (af, ar) = phi_cfg.slip_angles(x, u);
            let mut phi = DVector::zeros(2 * n);
            phi.rows_mut(0, n).copy_from(&eval_basis(&basis, &[af]));
            phi.rows_mut(n, n).copy_from(&eval_basis(&basis, &[ar]));
            phi
        })
        .process_noise(DMatrix::from_diagonal(&DVector::from_vec(vec![pn[0], pn[1], cfg.lag_noise])))
        .measurement_noise(DMatrix::from_diagonal(&DVector::from_row_slice(&cfg.measurement_noise)))
        .init(InitSpec::new(
            DVector::zeros(3),
            DMatrix::from_diagonal(&DVector::from_vec(vec![pn[0], pn[1], 0.0])),
            Xi0Policy::PriorPredictive,
        )?)
        .build()
}

pub fn problem<R: Rng + ?Sized>(cfg: &VehicleConfig, hyper: &BasisHyper, rng: &mut R) -> Result<Problem> {
    let sim = simulate(cfg, rng)?;
    let spec = model(cfg, hyper)?;
    let prior = hyper.prior(2, 2)?;
    let basis = hyper.basis()?;
    let n = basis.n_phi();
    let functions = (0..2)
        .map(|axle| {
            let b = basis.clone();
            let tire = cfg.tire;
            FunctionTarget {
                domain: hyper.eval_domain(),
                regressor: Arc::new(move |z: &[f64]| {
                    let mut phi = DVector::zeros(2 * n);
                    phi.rows_mut(axle * n, n).copy_from(&eval_basis(&b, z));
                    phi
                }),
                truth: Some(Arc::new(move |z: &[f64]| {
                    let mut v = DVector::zeros(2);
                    v[axle] = magic_formula(z[0], &tire).unwrap_or(f64::NAN);
                    v
                })),
                outputs: vec![axle],
            }
        })
        .collect();
    let true_states = sim
        .xs
        .iter()
        .scan(0.0, |prev, x| {
            let s = DVector::from_vec(vec![x[0], x[1], *prev]);
            *prev = x[0];
            Some(s)
        })
        .collect::<Vec<_>>();
    Ok(Problem {
        spec,
        prior,
        data: sim.dataset(),
        dt: sim.dt,
        true_states: Some(true_states),
        true_xis: Some(sim.xis),
        functions,
    })
}
