//! Electro-mechanical positioning system: a prismatic joint driven by a
//! force `τ`, with the measured position `s`. The friction force is learned
//! as a function of the velocity.
//!
//! Recordings are CSV files with the header `t,s,tau` and uniformly spaced
//! time stamps. [`synthesize`] produces a closed-loop record with a known
//! friction curve, which the examples and tests use in place of real data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{BasisHyper, FunctionTarget, Problem};
use crate::basis::{eval_basis, state_features, BasisExpansion};
use crate::error::{Error, Result};
use crate::ssm::{rk4_unchecked, Dataset, InitSpec, ModelSpec, Xi0Policy};

/// Relative tolerance on the sampling interval.
const PN0: f64 = 1e-10;
const PN1: f64 = 1e-6;

const DT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmpsRecord {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub tau: Vec<f64>,
}

impl EmpsRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.t.len() < 2 {
            return f64::NAN;
        }
        self.t[1] - self.t[0]
    }

    /// Keep every `k`-th sample.
    pub fn decimate(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("decimation factor must be at least 1".into()));
        }
        let pick = |v: &[f64]| v.iter().step_by(k).copied().collect::<Vec<_>>();
        Ok(Self {
            t: pick(&self.t),
            s: pick(&self.s),
            tau: pick(&self.tau),
        })
    }

    fn check_uniform(&self) -> Result<()> {
        if self.t.len() < 2 {
            return Err(Error::Format(format!("need at least two samples, found {}", self.t.len())));
        }
        let dt = self.dt();
        if !(dt > 0.0) {
            return Err(Error::Format(format!("time stamps must increase (dt = {dt})")));
        }
        for (k, w) in self.t.windows(2).enumerate() {
            let d = w[1] - w[0];
            if (d - dt).abs() > DT_TOL * dt.max(1e-3) {
                return Err(Error::Format(format!(
                    "non-uniform sampling between rows {} and {}: {d} vs {dt}",
                    k + 1,
                    k + 2
                )));
            }
        }
        Ok(())
    }

    pub fn dataset(&self) -> Dataset {
        Dataset {
            ys: self.s.iter().map(|&s| DVector::from_element(1, s)).collect(),
            us: self.tau.iter().map(|&u| DVector::from_element(1, u)).collect(),
        }
    }
}

/// Parse a `t,s,tau` CSV. Line numbers in errors count the header as line 1.
pub fn parse_emps<R: Read>(reader: R) -> Result<EmpsRecord> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_ascii_lowercase).collect();
    if header != ["t", "s", "tau"] {
        return Err(Error::Format(format!("expected header t,s,tau, found {}", header.join(","))));
    }
    let mut rec = EmpsRecord::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != 3 {
            return Err(Error::Parse {
                line,
                column: row.len().min(3) + 1,
                message: format!("expected 3 fields, found {}", row.len()),
            });
        }
        let mut vals = [0.0; 3];
        for (c, field) in row.iter().enumerate() {
            vals[c] = field.parse::<f64>().map_err(|e| Error::Parse {
                line,
                column: c + 1,
                message: format!("{field:?}: {e}"),
            })?;
            if !vals[c].is_finite() {
                return Err(Error::Parse {
                    line,
                    column: c + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
        }
        rec.t.push(vals[0]);
        rec.s.push(vals[1]);
        rec.tau.push(vals[2]);
    }
    rec.check_uniform()?;
    Ok(rec)
}

pub fn load_emps(path: &Path) -> Result<EmpsRecord> {
    parse_emps(std::fs::File::open(path)?)
}

pub fn write_emps<W: Write>(rec: &EmpsRecord, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "s", "tau"])?;
    for k in 0..rec.len() {
        w.write_record(&[rec.t[k].to_string(), rec.s[k].to_string(), rec.tau[k].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `F(v) = F_v v + F_c sign(v) + offset`, the classical identified friction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFriction {
    pub viscous: f64,
    pub coulomb: f64,
    pub offset: f64,
}

impl Default for LinearFriction {
    fn default() -> Self {
        Self {
            viscous: 203.5034,
            coulomb: 20.3935,
            offset: -3.1648,
        }
    }
}

impl LinearFriction {
    pub fn eval(&self, v: f64) -> f64 {
        let sign = if v == 0.0 { 0.0 } else { v.signum() };
        self.viscous * v + self.coulomb * sign + self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmpsConfig {
    /// Moving mass [kg].
    pub mass: f64,
    /// Diagonal of `Σω` for `[s, ṡ]` per (decimated) step of the inference
    /// model. It is deliberately wider than the simulator's noise so the
    /// filter can absorb friction errors before they are learned.
    pub process_noise: [f64; 2],
    /// Position measurement variance [m²].
    pub measurement_noise: f64,
    /// Keep every `decimate`-th sample of the training and test records.
    pub decimate: usize,
    /// Recorded training data; `None` uses the synthetic generator.
    pub train_csv: Option<PathBuf>,
    /// Recorded test data for the forward-simulation check.
    pub test_csv: Option<PathBuf>,
    pub synthetic: SyntheticEmps,
}

impl Default for EmpsConfig {
    fn default() -> Self {
        Self {
            mass: 95.1089,
            process_noise: [PN0, PN1],
            measurement_noise: 1e-10,
            decimate: 10,
            train_csv: None,
            test_csv: None,
            synthetic: SyntheticEmps::default(),
        }
    }
}

impl EmpsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::Config(format!("mass {} must be positive", self.mass)));
        }
        if self.decimate == 0 {
            return Err(Error::Config("decimate must be at least 1".into()));
        }
        Ok(())
    }
}

/// Closed-loop generator: a PD controller tracks smoothed position set-points
/// against a friction curve with a Stribeck dip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticEmps {
    pub dt: f64,
    pub duration: f64,
    pub kp: f64,
    pub kd: f64,
    /// Set-points [m], each held for `hold` seconds.
    pub setpoints: Vec<f64>,
    pub hold: f64,
    /// Time constant of the set-point smoothing filter [s].
    pub smoothing: f64,
    pub friction: LinearFriction,
    /// Extra static friction decaying with `exp(-(v / v_s)²)`.
    pub stribeck: f64,
    pub stribeck_velocity: f64,
    /// Diagonal of the simulated process noise for `[s, ṡ]`.
    pub process_noise: [f64; 2],
    /// Coulomb term is `tanh(v / v_c)` to keep the simulator smooth.
    pub coulomb_velocity: f64,
}

impl Default for SyntheticEmps {
    fn default() -> Self {
        Self {
            dt: 0.005,
            duration: 24.0,
            kp: 8000.0,
            kd: 1200.0,
            setpoints: vec![0.02, 0.15, 0.05, 0.18, 0.1, 0.03, 0.12, 0.19, 0.0, 0.16],
            hold: 2.4,
            smoothing: 1.0,
            friction: LinearFriction::default(),
            stribeck: 8.0,
            stribeck_velocity: 0.01,
            process_noise: [0.0, 1e-8],
            coulomb_velocity: 0.002,
        }
    }
}

impl SyntheticEmps {
    /// True friction force at velocity `v`.
    pub fn friction_at(&self, v: f64) -> f64 {
        let f = &self.friction;
        let sign = (v / self.coulomb_velocity).tanh();
        f.viscous * v + (f.coulomb + self.stribeck * (-(v / self.stribeck_velocity).powi(2)).exp()) * sign + f.offset
    }
}

/// Simulate a closed-loop record; returns the record and the true velocities.
pub fn synthesize<R: Rng + ?Sized>(cfg: &EmpsConfig, rng: &mut R) -> Result<(EmpsRecord, Vec<f64>)> {
    cfg.validate()?;
    let syn = &cfg.synthetic;
    if !(syn.dt > 0.0) || !(syn.duration > 0.0) || !(syn.hold > 0.0) || syn.setpoints.is_empty() {
        return Err(Error::Config("synthetic EMPS needs positive dt, duration, hold and set-points".into()));
    }
    let n = (syn.duration / syn.dt).round() as usize + 1;
    let e_std = cfg.measurement_noise.sqrt();
    let w_std = [syn.process_noise[0].sqrt(), syn.process_noise[1].sqrt()];
    let mut x = DVector::from_vec(vec![syn.setpoints[0], 0.0]);
    let (mut r, mut r_prev) = (x[0], x[0]);
    let alpha = (-syn.dt / syn.smoothing.max(1e-9)).exp();
    let mut rec = EmpsRecord::default();
    let mut vel = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * syn.dt;
        let idx = ((t / syn.hold) as usize).min(syn.setpoints.len() - 1);
        r = alpha * r + (1.0 - alpha) * syn.setpoints[idx];
        let r_dot = (r - r_prev) / syn.dt;
        r_prev = r;
        let e: f64 = rng.sample(rand_distr::StandardNormal);
        let y = x[0] + e_std * e;
        let tau = syn.kp * (r - y) + syn.kd * (r_dot - x[1]);
        rec.t.push(t);
        rec.s.push(y);
        rec.tau.push(tau);
        vel.push(x[1]);
        let u = DVector::from_element(1, tau);
        let next = rk4_unchecked(
            |x: &DVector<f64>, u: &DVector<f64>| DVector::from_vec(vec![x[1], (u[0] - syn.friction_at(x[1])) / cfg.mass]),
            &x,
            &u,
            syn.dt,
        );
        let w: [f64; 2] = [rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal)];
        x = next + DVector::from_vec(vec![w_std[0] * w[0], w_std[1] * w[1]]);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("synthetic EMPS diverged at step {k}")));
        }
    }
    Ok((rec, vel))
}

/// Ten basis functions on `|v| ≤ 0.2`, `ℓ = 0.04`, `σ² = 20`, `a = 300`, `ν = n_ξ`.
/// A small `a` keeps the friction draws too narrow to recover from the
/// velocity transients after a set-point change, and the filter loses track.
pub fn default_hyper() -> BasisHyper {
    BasisHyper {
        half_lengths: vec![0.2],
        n_phi: 10,
        sigma2: 20.0,
        lengthscale: Some(0.04),
        a: 300.0,
        antisymmetric: false,
        dof: Some(1.0),
        eval_fraction: super::DEFAULT_EVAL_FRACTION,
    }
}

fn rhs(x: &DVector<f64>, tau: f64, friction: f64, mass: f64) -> DVector<f64> {
    DVector::from_vec(vec![x[1], (tau - friction) / mass])
}

/// Inference model on `[s, ṡ]` with the friction `ξ` held over each step.
pub fn model(cfg: &EmpsConfig, hyper: &BasisHyper, dt: f64, s0: f64) -> Result<ModelSpec> {
    cfg.validate()?;
    if !(dt > 0.0) {
        return Err(Error::Config(format!("sampling interval {dt} must be positive")));
    }
    let mass = cfg.mass;
    let expansion = BasisExpansion::new(hyper.basis()?, state_features(vec![1]));
    let pn = cfg.process_noise;
    ModelSpec::builder(2, 1, 1, 1)
        .transition(move |x, xi, u| {
            let f = xi[0];
            rk4_unchecked(|x: &DVector<f64>, u: &DVector<f64>| rhs(x, u[0], f, mass), x, u, dt)
        })
        .measurement(|x, _| DVector::from_element(1, x[0]))
        .basis(expansion)
        .process_noise(DMatrix::from_diagonal(&DVector::from_row_slice(&pn)))
        .measurement_noise(DMatrix::from_element(1, 1, cfg.measurement_noise))
        .init(InitSpec::new(
            DVector::from_vec(vec![s0, 0.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![cfg.measurement_noise, pn[1]])),
            Xi0Policy::PriorPredictive,
        )?)
        .build()
}

/// Problem on a (decimated) record; `truth` is the friction curve if known.
pub fn problem_from_record(
    rec: &EmpsRecord,
    cfg: &EmpsConfig,
    hyper: &BasisHyper,
    truth: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
) -> Result<Problem> {
    let rec = rec.decimate(cfg.decimate)?;
    rec.check_uniform()?;
    let spec = model(cfg, hyper, rec.dt(), rec.s[0])?;
    let prior = hyper.prior(1, 1)?;
    let basis = hyper.basis()?;
    Ok(Problem {
        spec,
        prior,
        data: rec.dataset(),
        dt: rec.dt(),
        true_states: None,
        true_xis: None,
        functions: vec![FunctionTarget {
            domain: hyper.eval_domain(),
            regressor: Arc::new(move |z| eval_basis(&basis, z)),
            truth: truth.map(|f| Arc::new(move |z: &[f64]| DVector::from_element(1, f(z[0]))) as Arc<_>),
            outputs: vec![0],
        }],
    })
}

/// Synthetic closed-loop problem with known states and friction.
pub fn problem<R: Rng + ?Sized>(cfg: &EmpsConfig, hyper: &BasisHyper, rng: &mut R) -> Result<Problem> {
    let (rec, vel) = synthesize(cfg, rng)?;
    let syn = cfg.synthetic.clone();
    let truth_syn = syn.clone();
    let mut p = problem_from_record(&rec, cfg, hyper, Some(Arc::new(move |v| truth_syn.friction_at(v))))?;
    let k = cfg.decimate;
    let states: Vec<_> = vel
        .iter()
        .step_by(k)
        .zip(rec.s.iter().step_by(k))
        .map(|(&v, &s)| DVector::from_vec(vec![s, v]))
        .collect();
    p.true_xis = Some(states.iter().map(|x| DVector::from_element(1, syn.friction_at(x[1]))).collect());
    p.true_states = Some(states);
    Ok(p)
}

/// Open-loop forward simulation of the position with the recorded force and a
/// friction model, started at rest at the first measured position.
pub fn forward_simulate<F: Fn(f64) -> f64>(rec: &EmpsRecord, mass: f64, friction: F) -> Vec<f64> {
    let dt = rec.dt();
    let mut x = DVector::from_vec(vec![rec.s.first().copied().unwrap_or(0.0), 0.0]);
    let mut out = Vec::with_capacity(rec.len());
    for k in 0..rec.len() {
        out.push(x[0]);
        let u = DVector::from_element(1, rec.tau[k]);
        x = rk4_unchecked(|x: &DVector<f64>, u: &DVector<f64>| rhs(x, u[0], friction(x[1]), mass), &x, &u, dt);
    }
    out
}

pub fn position_rmse(rec: &EmpsRecord, simulated: &[f64]) -> f64 {
    let n = rec.len().min(simulated.len());
    if n == 0 {
        return f64::NAN;
    }
    let sse: f64 = (0..n).map(|k| (rec.s[k] - simulated[k]).powi(2)).sum();
    (sse / n as f64).sqrt()
}
