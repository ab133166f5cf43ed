//! State-space models with an unknown interface function.
//!
//! ```text
//! x_{t+1} = f(x_t, ξ_t, u_t) + ω_t,   ω_t ~ N(0, Σω)
//! ξ_t     = A φ(x_t, u_t) + ε_t,      ε_t ~ N(0, Σε)
//! y_t     = h(x_t, u_t) + e_t,        e_t ~ N(0, Σe)
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::basis::BasisExpansion;
use crate::error::{dim_check, Error, Result};
use crate::linalg::{is_symmetric, psd_sqrt, LowerFactor};

pub type TransitionFn =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MeasurementFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type RegressorFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Zero-mean Gaussian with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    cov: DMatrix<f64>,
    chol: LowerFactor,
    log_norm: f64,
}

impl GaussianNoise {
    pub fn new(cov: DMatrix<f64>, what: &str) -> Result<Self> {
        if !is_symmetric(&cov, 1e-12) {
            return Err(Error::SingularCovariance(format!("{what} is not symmetric")));
        }
        let chol = LowerFactor::new(&cov).ok_or_else(|| Error::SingularCovariance(what.into()))?;
        let log_norm = -0.5 * (cov.nrows() as f64 * (2.0 * PI).ln() + chol.log_det());
        Ok(Self {
            cov,
            chol,
            log_norm,
        })
    }

    pub fn diagonal(variances: &[f64], what: &str) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_row_slice(variances)), what)
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn factor(&self) -> &LowerFactor {
        &self.chol
    }

    /// `log N(r | 0, Σ)`.
    pub fn log_pdf(&self, residual: &DVector<f64>) -> f64 {
        self.log_norm - 0.5 * self.chol.solve_lower(residual).norm_squared()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.chol.mul_vec(&z)
    }
}

/// How `ξ_0` is initialized.
#[derive(Debug, Clone, PartialEq)]
pub enum Xi0Policy {
    /// Draw from the prior predictive at `φ(x_0, u_0)`.
    PriorPredictive,
    Fixed(DVector<f64>),
}

#[derive(Debug, Clone)]
pub struct InitSpec {
    pub x0_mean: DVector<f64>,
    pub x0_cov: DMatrix<f64>,
    pub xi0: Xi0Policy,
    x0_sqrt: DMatrix<f64>,
}

impl InitSpec {
    /// `x_0 ~ N(mean, cov)` with a positive semi-definite `cov`.
    pub fn new(x0_mean: DVector<f64>, x0_cov: DMatrix<f64>, xi0: Xi0Policy) -> Result<Self> {
        dim_check(x0_cov.shape() == (x0_mean.len(), x0_mean.len()), || {
            format!("x0 covariance {:?} for a state of length {}", x0_cov.shape(), x0_mean.len())
        })?;
        if !is_symmetric(&x0_cov, 1e-12) {
            return Err(Error::SingularCovariance("x0 covariance is not symmetric".into()));
        }
        let x0_sqrt = psd_sqrt(&x0_cov)
            .ok_or_else(|| Error::SingularCovariance("x0 covariance is not PSD".into()))?;
        Ok(Self {
            x0_mean,
            x0_cov,
            xi0,
            x0_sqrt,
        })
    }

    /// Deterministic start at `x0` with `ξ` from the prior predictive.
    pub fn point(x0: DVector<f64>) -> Self {
        let n = x0.len();
        Self::new(x0, DMatrix::zeros(n, n), Xi0Policy::PriorPredictive).expect("zero covariance is PSD")
    }

    pub fn sample_x0<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.x0_mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.x0_mean + &self.x0_sqrt * z
    }
}

/// Known dynamics and measurement equations around the interface variable.
#[derive(Clone)]
pub struct ModelSpec {
    pub n_x: usize,
    pub n_xi: usize,
    pub n_y: usize,
    pub n_u: usize,
    pub n_phi: usize,
    transition: TransitionFn,
    measurement: MeasurementFn,
    regressor: RegressorFn,
    pub process_noise: GaussianNoise,
    pub measurement_noise: GaussianNoise,
    pub init: InitSpec,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("n_x", &self.n_x)
            .field("n_xi", &self.n_xi)
            .field("n_y", &self.n_y)
            .field("n_u", &self.n_u)
            .field("n_phi", &self.n_phi)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn builder(n_x: usize, n_xi: usize, n_y: usize, n_u: usize) -> ModelBuilder {
        ModelBuilder {
            n_x,
            n_xi,
            n_y,
            n_u,
            transition: None,
            measurement: None,
            regressor: None,
            process_noise: None,
            measurement_noise: None,
            init: None,
        }
    }

    /// `f(x, ξ, u)`
    #[inline]
    pub fn transition(&self, x: &DVector<f64>, xi: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.transition)(x, xi, u)
    }

    /// `h(x, u)`
    #[inline]
    pub fn measurement(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.measurement)(x, u)
    }

    /// `φ(x, u)`
    #[inline]
    pub fn regressor(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.regressor)(x, u)
    }

    pub fn zero_input(&self) -> DVector<f64> {
        DVector::zeros(self.n_u)
    }

    /// Replace the initial-state distribution.
    pub fn with_init(mut self, init: InitSpec) -> Result<Self> {
        dim_check(init.x0_mean.len() == self.n_x, || "init mean does not match n_x".into())?;
        self.init = init;
        Ok(self)
    }

    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        dim_check(data.ys.len() == data.us.len(), || {
            format!("{} measurements but {} inputs", data.ys.len(), data.us.len())
        })?;
        for (t, (y, u)) in data.ys.iter().zip(&data.us).enumerate() {
            dim_check(y.len() == self.n_y, || format!("y[{t}] has length {}", y.len()))?;
            dim_check(u.len() == self.n_u, || format!("u[{t}] has length {}", u.len()))?;
        }
        Ok(())
    }
}

pub struct ModelBuilder {
    n_x: usize,
    n_xi: usize,
    n_y: usize,
    n_u: usize,
    transition: Option<TransitionFn>,
    measurement: Option<MeasurementFn>,
    regressor: Option<(usize, RegressorFn)>,
    process_noise: Option<DMatrix<f64>>,
    measurement_noise: Option<DMatrix<f64>>,
    init: Option<InitSpec>,
}

impl ModelBuilder {
    pub fn transition(
        mut self,
        f: impl Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.transition = Some(Arc::new(f));
        self
    }

    pub fn measurement(
        mut self,
        h: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.measurement = Some(Arc::new(h));
        self
    }

    pub fn regressor(
        mut self,
        n_phi: usize,
        phi: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.regressor = Some((n_phi, Arc::new(phi)));
        self
    }

    pub fn basis(self, expansion: BasisExpansion) -> Self {
        let n = expansion.n_phi();
        self.regressor(n, move |x, u| expansion.eval(x, u))
    }

    pub fn process_noise(mut self, cov: DMatrix<f64>) -> Self {
        self.process_noise = Some(cov);
        self
    }

    pub fn measurement_noise(mut self, cov: DMatrix<f64>) -> Self {
        self.measurement_noise = Some(cov);
        self
    }

    pub fn init(mut self, init: InitSpec) -> Self {
        self.init = Some(init);
        self
    }

    /// Assemble and probe every function once at the initial mean.
    pub fn build(self) -> Result<ModelSpec> {
        let missing = |what: &str| Error::Config(format!("model is missing {what}"));
        let transition = self.transition.ok_or_else(|| missing("a transition function"))?;
        let measurement = self.measurement.ok_or_else(|| missing("a measurement function"))?;
        let (n_phi, regressor) = self.regressor.ok_or_else(|| missing("a regressor"))?;
        let process_noise = GaussianNoise::new(
            self.process_noise.ok_or_else(|| missing("process noise"))?,
            "process noise covariance",
        )?;
        let measurement_noise = GaussianNoise::new(
            self.measurement_noise.ok_or_else(|| missing("measurement noise"))?,
            "measurement noise covariance",
        )?;
        let init = match self.init {
            Some(i) => i,
            None => InitSpec::point(DVector::zeros(self.n_x)),
        };
        dim_check(process_noise.dim() == self.n_x, || {
            format!("process noise is {0}x{0}, n_x = {1}", process_noise.dim(), self.n_x)
        })?;
        dim_check(measurement_noise.dim() == self.n_y, || {
            format!("measurement noise is {0}x{0}, n_y = {1}", measurement_noise.dim(), self.n_y)
        })?;
        dim_check(init.x0_mean.len() == self.n_x, || {
            format!("init mean has length {}, n_x = {}", init.x0_mean.len(), self.n_x)
        })?;
        if let Xi0Policy::Fixed(xi) = &init.xi0 {
            dim_check(xi.len() == self.n_xi, || "fixed xi0 does not match n_xi".into())?;
        }

        let x = &init.x0_mean;
        let u = DVector::zeros(self.n_u);
        let xi = DVector::zeros(self.n_xi);
        let fx = transition(x, &xi, &u);
        dim_check(fx.len() == self.n_x, || format!("f returns length {}, n_x = {}", fx.len(), self.n_x))?;
        let hx = measurement(x, &u);
        dim_check(hx.len() == self.n_y, || format!("h returns length {}, n_y = {}", hx.len(), self.n_y))?;
        let phi = regressor(x, &u);
        dim_check(phi.len() == n_phi, || format!("phi returns length {}, declared {n_phi}", phi.len()))?;

        Ok(ModelSpec {
            n_x: self.n_x,
            n_xi: self.n_xi,
            n_y: self.n_y,
            n_u: self.n_u,
            n_phi,
            transition,
            measurement,
            regressor,
            process_noise,
            measurement_noise,
            init,
        })
    }
}

/// Measurements `y_{0:T}` and inputs `u_{0:T}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub ys: Vec<DVector<f64>>,
    pub us: Vec<DVector<f64>>,
}

impl Dataset {
    pub fn new(ys: Vec<DVector<f64>>, us: Vec<DVector<f64>>) -> Result<Self> {
        dim_check(ys.len() == us.len(), || format!("{} measurements, {} inputs", ys.len(), us.len()))?;
        Ok(Self { ys, us })
    }

    /// Inputs of width zero.
    pub fn without_inputs(ys: Vec<DVector<f64>>) -> Self {
        let us = vec![DVector::zeros(0); ys.len()];
        Self { ys, us }
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }
}

/// One classical Runge–Kutta step of `ẋ = f(x, u)` with `u` held constant.
pub fn rk4_step<F>(f: F, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("step size {dt} must be positive")));
    }
    let out = rk4_unchecked(f, x, u, dt);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite derivative in RK4 step".into()));
    }
    Ok(out)
}

/// [`rk4_step`] without the step-size and finiteness checks, for use inside
/// transition closures.
pub fn rk4_unchecked<F>(f: F, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(x, u);
    let k2 = f(&(x + &k1 * (0.5 * dt)), u);
    let k3 = f(&(x + &k2 * (0.5 * dt)), u);
    let k4 = f(&(x + &k3 * dt), u);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// `log N(x′ | f(x, ξ, u), Σω)`.
pub fn transition_density(
    spec: &ModelSpec,
    x_next: &DVector<f64>,
    x: &DVector<f64>,
    xi: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    dim_check(x_next.len() == spec.n_x, || "x' does not match n_x".into())?;
    Ok(spec.process_noise.log_pdf(&(x_next - spec.transition(x, xi, u))))
}

/// `log N(y | h(x, u), Σe)`.
pub fn measurement_density(
    spec: &ModelSpec,
    y: &DVector<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    dim_check(y.len() == spec.n_y, || "y does not match n_y".into())?;
    Ok(spec.measurement_noise.log_pdf(&(y - spec.measurement(x, u))))
}
