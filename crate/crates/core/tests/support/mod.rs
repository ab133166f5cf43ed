//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use hybrid_sysid::conjugate::MniwParams;
use hybrid_sysid::ssm::{Dataset, InitSpec, ModelSpec, Xi0Policy};
use nalgebra::{DMatrix, DVector};

/// Scalar model `x' = a x + ω, y = x + e`, `x_0 ~ N(m0, p0)`.
#[derive(Debug, Clone, Copy)]
pub struct ScalarLinear {
    pub a: f64,
    pub q: f64,
    pub r: f64,
    pub m0: f64,
    pub p0: f64,
}

impl ScalarLinear {
    pub fn stationary_std(&self) -> f64 {
        (self.q / (1.0 - self.a * self.a)).sqrt()
    }

    pub fn simulate(&self, len: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut x = self.m0 + self.p0.sqrt() * n.sample(&mut rng);
        let mut xs = Vec::with_capacity(len);
        let mut ys = Vec::with_capacity(len);
        for _ in 0..len {
            xs.push(x);
            ys.push(x + self.r.sqrt() * n.sample(&mut rng));
            x = self.a * x + self.q.sqrt() * n.sample(&mut rng);
        }
        (xs, ys)
    }

    /// Filtering means and variances. `y_0` is not assimilated, matching a
    /// particle filter that starts from uniform weights.
    pub fn kalman_filter(&self, ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut m = self.m0;
        let mut p = self.p0;
        let mut ms = vec![m];
        let mut ps = vec![p];
        for y in &ys[1..] {
            let mp = self.a * m;
            let pp = self.a * self.a * p + self.q;
            let k = pp / (pp + self.r);
            m = mp + k * (y - mp);
            p = (1.0 - k) * pp;
            ms.push(m);
            ps.push(p);
        }
        (ms, ps)
    }

    /// Rauch–Tung–Striebel smoothing means and variances.
    pub fn rts_smoother(&self, ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mf, pf) = self.kalman_filter(ys);
        let n = ys.len();
        let mut ms = mf.clone();
        let mut ps = pf.clone();
        for t in (0..n - 1).rev() {
            let pp = self.a * self.a * pf[t] + self.q;
            let g = pf[t] * self.a / pp;
            ms[t] = mf[t] + g * (ms[t + 1] - self.a * mf[t]);
            ps[t] = pf[t] + g * g * (ps[t + 1] - pp);
        }
        (ms, ps)
    }

    fn builder(&self) -> hybrid_sysid::ssm::ModelBuilder {
        let init = InitSpec::new(
            DVector::from_element(1, self.m0),
            DMatrix::from_element(1, 1, self.p0),
            Xi0Policy::PriorPredictive,
        )
        .unwrap();
        ModelSpec::builder(1, 1, 1, 0)
            .measurement(|x, _| x.clone())
            .process_noise(DMatrix::from_element(1, 1, self.q))
            .measurement_noise(DMatrix::from_element(1, 1, self.r))
            .init(init)
            .regressor(1, |x, _| x.clone())
    }

    /// `f = a x + ξ`; paired with [`pinned_prior`] the interface stays at zero.
    pub fn additive_model(&self) -> ModelSpec {
        let a = self.a;
        self.builder().transition(move |x, xi, _| x * a + xi).build().unwrap()
    }

    /// `f = a x`; `ξ` is inferred but does not feed back into the state.
    pub fn decoupled_model(&self) -> ModelSpec {
        let a = self.a;
        self.builder().transition(move |x, _, _| x * a).build().unwrap()
    }
}

/// Prior that pins `ξ` to zero: zero mean, `V = 1e-16`, tiny scale.
pub fn pinned_prior() -> MniwParams {
    MniwParams::new(
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 1, 1e-16),
        DMatrix::from_element(1, 1, 1e-20),
        4.0,
    )
    .unwrap()
}

pub fn dataset(ys: &[f64]) -> Dataset {
    Dataset::without_inputs(ys.iter().map(|&y| DVector::from_element(1, y)).collect())
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Iterated adaptive Simpson over a rectangle.
pub fn simpson_2d<F: Fn(f64, f64) -> f64>(f: &F, x: (f64, f64), y: (f64, f64), tol: f64) -> f64 {
    let inner = |xv: f64| simpson(&|yv| f(xv, yv), y.0, y.1, tol);
    simpson(&inner, x.0, x.1, tol)
}

/// Conjugate multivariate regression posterior from the stacked design
/// matrices `Φ` (`n_φ × T`) and `X` (`n_ξ × T`):
/// `V_n = (V⁻¹ + ΦΦᵀ)⁻¹`, `M_n = (XΦᵀ + MV⁻¹) V_n`,
/// `Ψ_n = Ψ + XXᵀ + MV⁻¹Mᵀ − M_n V_n⁻¹ M_nᵀ`, `ν_n = ν + T`.
pub fn regression_posterior(prior: &MniwParams, phis: &[DVector<f64>], xis: &[DVector<f64>]) -> MniwParams {
    let n_phi = prior.col_cov.nrows();
    let n_xi = prior.scale.nrows();
    let t = phis.len();
    let big_phi = DMatrix::from_fn(n_phi, t, |i, j| phis[j][i]);
    let big_x = DMatrix::from_fn(n_xi, t, |i, j| xis[j][i]);
    let v_inv = prior.col_cov.clone().try_inverse().unwrap();
    let prec = &v_inv + &big_phi * big_phi.transpose();
    let v_n = prec.clone().try_inverse().unwrap();
    let m_n = (&big_x * big_phi.transpose() + &prior.mean * &v_inv) * &v_n;
    let psi_n = &prior.scale + &big_x * big_x.transpose() + &prior.mean * &v_inv * prior.mean.transpose()
        - &m_n * &prec * m_n.transpose();
    MniwParams {
        mean: m_n,
        col_cov: v_n,
        scale: 0.5 * (&psi_n + psi_n.transpose()),
        dof: prior.dof + t as f64,
    }
}

/// Random symmetric positive definite matrix `B Bᵀ + d I`.
pub fn random_spd<R: rand::Rng>(n: usize, d: f64, rng: &mut R) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * d
}

/// Largest entry-wise difference relative to the largest entry of `b`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

/// Mean and Monte Carlo standard error of a Markov chain, with the
/// integrated autocorrelation time from Geyer's initial positive sequence.
pub fn chain_mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let acov = |lag: usize| (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / n as f64;
    let c0 = acov(0);
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (acov(lag) + acov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (mean, (c0 * tau.max(1.0) / n as f64).sqrt())
}
