//! Marginalized auxiliary particle filter for joint online state,
//! interface-variable and parameter inference.
//!
//! Each particle carries its own MNIW statistics; the parameters are never
//! sampled. Interface values are drawn from the Student-t predictive of the
//! ancestor's statistics, which are then resampled and updated along with
//! the state.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::{params_from_stats, FactoredPosterior, MniwParams, SuffStats};
use crate::error::{Error, Result};
use crate::linalg::normalize_log_weights;
use crate::rng::{next_key, stream};
use crate::ssm::{Dataset, ModelSpec, Xi0Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampler {
    #[default]
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    pub n_particles: usize,
    /// Forgetting factor in `(0, 1]`.
    pub gamma: f64,
    pub resampler: Resampler,
    pub seed: u64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            n_particles: 200,
            gamma: 0.999,
            resampler: Resampler::Multinomial,
            seed: 0,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::Config("n_particles must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidForgettingFactor(self.gamma));
        }
        Ok(())
    }
}

/// Weighted particles `{x_t^i, ξ_t^i, η_t^i, q_t^i}`.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub t: usize,
    pub states: Vec<DVector<f64>>,
    pub xis: Vec<DVector<f64>>,
    /// Normalized: their log-sum-exp is zero.
    pub log_weights: Vec<f64>,
    pub stats: Vec<FactoredPosterior>,
    /// Ancestors drawn in the last step (identity after initialization).
    pub ancestors: Vec<usize>,
    /// Input `u_t` at the current time, used by the next transition.
    pub last_input: DVector<f64>,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// `1 / Σ q²`
    pub fn ess(&self) -> f64 {
        1.0 / self.log_weights.iter().map(|w| (2.0 * w).exp()).sum::<f64>()
    }
}

/// Draw `x_0` from the initial distribution and `ξ_0` per its policy; the
/// pair `(φ(x_0, u_0), ξ_0)` is folded into every particle's statistics.
pub fn init_ensemble<R: Rng + ?Sized>(
    spec: &ModelSpec,
    prior: &MniwParams,
    cfg: &OnlineConfig,
    u0: &DVector<f64>,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    cfg.validate()?;
    check_prior(spec, prior)?;
    let prior = FactoredPosterior::from_params(prior)?;
    let n = cfg.n_particles;
    let key = next_key(rng);
    let parts: Vec<(DVector<f64>, DVector<f64>, FactoredPosterior)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = stream(key, i as u64);
            init_particle(spec, &prior, u0, &mut r)
        })
        .collect::<Result<_>>()?;
    let mut ens = ParticleEnsemble {
        t: 0,
        states: Vec::with_capacity(n),
        xis: Vec::with_capacity(n),
        log_weights: vec![-(n as f64).ln(); n],
        stats: Vec::with_capacity(n),
        ancestors: (0..n).collect(),
        last_input: u0.clone(),
    };
    for (x, xi, s) in parts {
        ens.states.push(x);
        ens.xis.push(xi);
        ens.stats.push(s);
    }
    Ok(ens)
}

pub(crate) fn check_prior(spec: &ModelSpec, prior: &MniwParams) -> Result<()> {
    if prior.n_xi() != spec.n_xi || prior.n_phi() != spec.n_phi {
        return Err(Error::Dimension(format!(
            "prior is {}x{}, model has n_xi = {}, n_phi = {}",
            prior.n_xi(),
            prior.n_phi(),
            spec.n_xi,
            spec.n_phi
        )));
    }
    prior.validate()
}

pub(crate) fn init_particle<R: Rng + ?Sized>(
    spec: &ModelSpec,
    prior: &FactoredPosterior,
    u0: &DVector<f64>,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>, FactoredPosterior)> {
    let x = spec.init.sample_x0(rng);
    let phi = spec.regressor(&x, u0);
    let xi = match &spec.init.xi0 {
        Xi0Policy::PriorPredictive => prior.sample_predictive(&phi, rng)?,
        Xi0Policy::Fixed(v) => v.clone(),
    };
    let mut stats = prior.clone();
    stats.observe(&phi, &xi)?;
    Ok((x, xi, stats))
}

/// Ancestor indices for normalized log-weights.
pub fn resample_categorical<R: Rng + ?Sized>(
    log_weights: &[f64],
    n: usize,
    mode: Resampler,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let w: Vec<f64> = log_weights.iter().map(|l| l.exp()).collect();
    if w.iter().any(|v| !v.is_finite()) || !(w.iter().sum::<f64>() > 0.0) {
        return Err(Error::ParticleCollapse {
            t: 0,
            reason: "resampling weights are degenerate".into(),
        });
    }
    Ok(match mode {
        Resampler::Multinomial => {
            let dist = WeightedIndex::new(&w).map_err(|e| Error::ParticleCollapse {
                t: 0,
                reason: e.to_string(),
            })?;
            (0..n).map(|_| rng.sample(&dist)).collect()
        }
        Resampler::Systematic => {
            let total: f64 = w.iter().sum();
            let u0: f64 = rng.random::<f64>() / n as f64;
            let mut out = Vec::with_capacity(n);
            let mut cum = w[0] / total;
            let mut j = 0;
            for k in 0..n {
                let u = u0 + k as f64 / n as f64;
                while u > cum && j + 1 < w.len() {
                    j += 1;
                    cum += w[j] / total;
                }
                out.push(j);
            }
            out
        }
    })
}

fn with_time(e: Error, t: usize) -> Error {
    match e {
        Error::ParticleCollapse { reason, .. } => Error::ParticleCollapse { t, reason },
        other => other,
    }
}

/// First-stage quantities shared by the online and conditional filters.
pub(crate) struct Lookahead {
    /// `x̃^i = f(x^i, ξ^i, u_{t−1})`
    pub aux: Vec<DVector<f64>>,
    /// `log N(y_t | h(x̃^i, u_t), Σe)`
    pub aux_loglik: Vec<f64>,
    /// `log λ^i`, normalized.
    pub lambda: Vec<f64>,
}

pub(crate) fn lookahead(
    spec: &ModelSpec,
    states: &[DVector<f64>],
    xis: &[DVector<f64>],
    log_weights: &[f64],
    u_prev: &DVector<f64>,
    y: &DVector<f64>,
    u: &DVector<f64>,
    t: usize,
) -> Result<Lookahead> {
    let (aux, aux_loglik): (Vec<_>, Vec<_>) = states
        .par_iter()
        .zip(xis.par_iter())
        .map(|(x, xi)| {
            let xt = spec.transition(x, xi, u_prev);
            let ll = spec.measurement_noise.log_pdf(&(y - spec.measurement(&xt, u)));
            (xt, ll)
        })
        .unzip();
    let mut lambda: Vec<f64> = log_weights
        .iter()
        .zip(&aux_loglik)
        .map(|(q, l)| if l.is_nan() { f64::NEG_INFINITY } else { q + l })
        .collect();
    let lse = normalize_log_weights(&mut lambda);
    if !lse.is_finite() {
        return Err(Error::ParticleCollapse {
            t,
            reason: format!("all first-stage weights vanish (log-sum {lse})"),
        });
    }
    Ok(Lookahead {
        aux,
        aux_loglik,
        lambda,
    })
}

/// Propagate one particle from ancestor `a`: draw `x_t`, draw `ξ_t` from the
/// predictive and update a copy of the ancestor's statistics.
#[allow(clippy::too_many_arguments)]
pub(crate) fn propagate<R: Rng + ?Sized>(
    spec: &ModelSpec,
    aux: &DVector<f64>,
    aux_loglik: f64,
    ancestor_stats: &FactoredPosterior,
    y: &DVector<f64>,
    u: &DVector<f64>,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>, FactoredPosterior, f64, DVector<f64>)> {
    let x = aux + spec.process_noise.sample(rng);
    let phi = spec.regressor(&x, u);
    let xi = ancestor_stats.sample_predictive(&phi, rng)?;
    let mut stats = ancestor_stats.clone();
    stats.observe(&phi, &xi)?;
    let ll = spec.measurement_noise.log_pdf(&(y - spec.measurement(&x, u)));
    Ok((x, xi, stats, ll - aux_loglik, phi))
}

pub(crate) fn finish_weights(mut logw: Vec<f64>, t: usize) -> Result<Vec<f64>> {
    for w in logw.iter_mut() {
        if w.is_nan() {
            *w = f64::NEG_INFINITY;
        }
    }
    let lse = normalize_log_weights(&mut logw);
    if !lse.is_finite() {
        return Err(Error::ParticleCollapse {
            t,
            reason: "all second-stage weights vanish".into(),
        });
    }
    Ok(logw)
}

/// One filter step with measurement `y_t` and input `u_t`.
pub fn step<R: Rng + ?Sized>(
    ens: &ParticleEnsemble,
    y: &DVector<f64>,
    u: &DVector<f64>,
    spec: &ModelSpec,
    cfg: &OnlineConfig,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    let t = ens.t + 1;
    let n = ens.len();
    let mut stats = ens.stats.clone();
    if cfg.gamma < 1.0 {
        stats
            .par_iter_mut()
            .map(|s| s.forget(cfg.gamma))
            .collect::<Result<()>>()?;
    }
    let la = lookahead(spec, &ens.states, &ens.xis, &ens.log_weights, &ens.last_input, y, u, t)?;
    let ancestors = if n == 1 {
        vec![0]
    } else {
        resample_categorical(&la.lambda, n, cfg.resampler, rng).map_err(|e| with_time(e, t))?
    };
    let key = next_key(rng);
    let parts: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = ancestors[i];
            let mut r = stream(key, i as u64);
            propagate(spec, &la.aux[a], la.aux_loglik[a], &stats[a], y, u, &mut r)
        })
        .collect::<Result<_>>()?;
    let mut out = ParticleEnsemble {
        t,
        states: Vec::with_capacity(n),
        xis: Vec::with_capacity(n),
        log_weights: Vec::with_capacity(n),
        stats: Vec::with_capacity(n),
        ancestors,
        last_input: u.clone(),
    };
    let mut logw = Vec::with_capacity(n);
    for (x, xi, s, w, _) in parts {
        out.states.push(x);
        out.xis.push(xi);
        out.stats.push(s);
        logw.push(w);
    }
    out.log_weights = finish_weights(logw, t)?;
    Ok(out)
}

/// Weighted moments of the ensemble and the parameters implied by the
/// weight-averaged statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSummary {
    #[serde(with = "crate::serde_matrix::vector")]
    pub state_mean: DVector<f64>,
    #[serde(with = "crate::serde_matrix::matrix")]
    pub state_cov: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix::vector")]
    pub xi_mean: DVector<f64>,
    #[serde(with = "crate::serde_matrix::matrix")]
    pub xi_cov: DMatrix<f64>,
    pub params: MniwParams,
}

pub fn posterior_summary(ens: &ParticleEnsemble) -> Result<PosteriorSummary> {
    let w = ens.weights();
    let (state_mean, state_cov) = weighted_moments(&ens.states, &w);
    let (xi_mean, xi_cov) = weighted_moments(&ens.xis, &w);
    Ok(PosteriorSummary {
        state_mean,
        state_cov,
        xi_mean,
        xi_cov,
        params: params_from_stats(&average_stats(ens)?)?,
    })
}

/// `Σ q^i η^i`
pub fn average_stats(ens: &ParticleEnsemble) -> Result<SuffStats> {
    let w = ens.weights();
    SuffStats::weighted_sum(w.iter().copied().zip(ens.stats.iter().map(|s| s.stats())))
        .ok_or_else(|| Error::Config("empty ensemble".into()))
}

pub(crate) fn weighted_moments(v: &[DVector<f64>], w: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let d = v.first().map_or(0, |x| x.len());
    let total: f64 = w.iter().sum();
    let mut mean = DVector::zeros(d);
    for (x, wi) in v.iter().zip(w) {
        mean.axpy(*wi / total, x, 1.0);
    }
    let mut cov = DMatrix::zeros(d, d);
    for (x, wi) in v.iter().zip(w) {
        let r = x - &mean;
        cov.ger(*wi / total, &r, &r, 1.0);
    }
    (mean, cov)
}

/// Per-step particle values and ancestors, enough to trace any trajectory.
#[derive(Debug, Clone, Default)]
pub struct FilterHistory {
    /// `n_x × N` per time step.
    pub states: Vec<DMatrix<f64>>,
    /// `n_ξ × N` per time step.
    pub xis: Vec<DMatrix<f64>>,
    /// `ancestors[t][i]` is the index at `t − 1` of particle `i` at `t`;
    /// entry 0 is the identity.
    pub ancestors: Vec<Vec<usize>>,
}

impl FilterHistory {
    pub(crate) fn push(&mut self, states: &[DVector<f64>], xis: &[DVector<f64>], ancestors: &[usize]) {
        self.states.push(columns(states));
        self.xis.push(columns(xis));
        self.ancestors.push(ancestors.to_vec());
    }

    /// The trajectory ending in particle `j` at the last step.
    pub fn trace(&self, j: usize) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let len = self.states.len();
        let mut xs = vec![DVector::zeros(0); len];
        let mut xis = vec![DVector::zeros(0); len];
        let mut idx = j;
        for t in (0..len).rev() {
            xs[t] = self.states[t].column(idx).into_owned();
            xis[t] = self.xis[t].column(idx).into_owned();
            if t > 0 {
                idx = self.ancestors[t][idx];
            }
        }
        (xs, xis)
    }
}

pub(crate) fn columns(v: &[DVector<f64>]) -> DMatrix<f64> {
    let d = v.first().map_or(0, |x| x.len());
    DMatrix::from_fn(d, v.len(), |r, c| v[c][r])
}

/// Output of [`run_filter`].
pub struct FilterOutput {
    pub ensemble: ParticleEnsemble,
    /// Weighted mean of the states at every step.
    pub state_means: Vec<DVector<f64>>,
    pub xi_means: Vec<DVector<f64>>,
    pub ess: Vec<f64>,
    pub history: Option<FilterHistory>,
}

/// Run the filter over `data`. `observer` sees the ensemble after
/// initialization and after every step.
pub fn run_filter<R, F>(
    spec: &ModelSpec,
    prior: &MniwParams,
    data: &Dataset,
    cfg: &OnlineConfig,
    record_history: bool,
    rng: &mut R,
    mut observer: F,
) -> Result<FilterOutput>
where
    R: Rng + ?Sized,
    F: FnMut(&ParticleEnsemble) -> Result<()>,
{
    spec.check_dataset(data)?;
    if data.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let mut ens = init_ensemble(spec, prior, cfg, &data.us[0], rng)?;
    let mut history = record_history.then(FilterHistory::default);
    let mut state_means = Vec::with_capacity(data.len());
    let mut xi_means = Vec::with_capacity(data.len());
    let mut ess = Vec::with_capacity(data.len());
    let mut record = |ens: &ParticleEnsemble, h: &mut Option<FilterHistory>| {
        let w = ens.weights();
        state_means.push(weighted_moments(&ens.states, &w).0);
        xi_means.push(weighted_moments(&ens.xis, &w).0);
        ess.push(ens.ess());
        if let Some(h) = h {
            h.push(&ens.states, &ens.xis, &ens.ancestors);
        }
    };
    record(&ens, &mut history);
    observer(&ens)?;
    for t in 1..data.len() {
        ens = step(&ens, &data.ys[t], &data.us[t], spec, cfg, rng)?;
        record(&ens, &mut history);
        observer(&ens)?;
    }
    Ok(FilterOutput {
        ensemble: ens,
        state_means,
        xi_means,
        ess,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn one_hot_resampling() {
        let lw = [f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY];
        for mode in [Resampler::Multinomial, Resampler::Systematic] {
            let a = resample_categorical(&lw, 10, mode, &mut seeded(1)).unwrap();
            assert!(a.iter().all(|&i| i == 1));
        }
    }

    #[test]
    fn systematic_uniform_is_a_permutation_count() {
        let n = 17;
        let lw = vec![-(n as f64).ln(); n];
        let a = resample_categorical(&lw, n, Resampler::Systematic, &mut seeded(4)).unwrap();
        let mut counts = vec![0; n];
        for i in a {
            counts[i] += 1;
        }
        assert!(counts.iter().all(|&c| c == 1));
    }

    #[test]
    fn degenerate_weights_collapse() {
        let lw = [f64::NAN, 0.0];
        assert!(matches!(
            resample_categorical(&lw, 2, Resampler::Multinomial, &mut seeded(0)),
            Err(Error::ParticleCollapse { .. })
        ));
    }

    #[test]
    fn weighted_moments_single_point() {
        let v = vec![DVector::from_vec(vec![1.0, 2.0])];
        let (m, c) = weighted_moments(&v, &[1.0]);
        assert_eq!(m, v[0]);
        assert_eq!(c, DMatrix::zeros(2, 2));
    }
}
