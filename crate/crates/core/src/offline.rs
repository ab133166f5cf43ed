//! Marginalized particle Gibbs with ancestor sampling.
//!
//! A conditional particle filter keeps one particle pinned to a reference
//! trajectory and redraws only its ancestor. The ancestor weights weigh each
//! particle's history against the reference future through the ratio of MNIW
//! normalizers `g(η_t^i) / g(η_t^i + s′_{t+1:T})`, which is the parameter
//! marginal likelihood of the reference tail given that history.
//!
//! Every particle carries two factored posteriors: its own statistics
//! `η_t^i`, and the concatenation `η_t^i + s′_{t+1:T}`. Both change by rank-one
//! terms per step, so neither is ever refactored from scratch.

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::{
    log_normalizer, params_from_stats, sample_mniw, trajectory_stats, FactoredPosterior,
    MniwParams, SuffStats, WeightNoiseSample,
};
use crate::error::{dim_check, Error, Result};
use crate::linalg::normalize_log_weights;
use crate::online::{
    check_prior, finish_weights, init_particle, lookahead, propagate, resample_categorical,
    run_filter, OnlineConfig, Resampler,
};
use crate::rng::{next_key, stream};
use crate::ssm::{Dataset, ModelSpec};

/// Which base weights multiply the ancestor-sampling ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AncestorBase {
    /// The filtering weights `q_{t−1}`. Leaves the smoothing posterior invariant.
    #[default]
    Filtering,
    /// The first-stage weights `λ`, which additionally contain the
    /// lookahead likelihood `N(y_t | h(x̃_t))`.
    FirstStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgasConfig {
    pub n_particles: usize,
    /// Number of conditional sweeps `K`.
    pub iterations: usize,
    pub resampler: Resampler,
    pub ancestor_base: AncestorBase,
    /// Forgetting factor of the filter pass that builds the first reference.
    pub init_gamma: f64,
    /// Keep every sampled trajectory, not only the last.
    pub keep_trajectories: bool,
}

impl Default for PgasConfig {
    fn default() -> Self {
        Self {
            n_particles: 200,
            iterations: 800,
            resampler: Resampler::Multinomial,
            ancestor_base: AncestorBase::Filtering,
            init_gamma: 1.0,
            keep_trajectories: true,
        }
    }
}

impl PgasConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::Config("conditional SMC needs at least 2 particles".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.init_gamma > 0.0 && self.init_gamma <= 1.0) {
            return Err(Error::InvalidForgettingFactor(self.init_gamma));
        }
        Ok(())
    }
}

/// The trajectory the pinned particle follows.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub xs: Vec<DVector<f64>>,
    pub xis: Vec<DVector<f64>>,
    /// `φ(x′_t, u_t)`
    pub phis: Vec<DVector<f64>>,
    /// Statistics of the whole path, `s′_{0:T}`.
    pub total: SuffStats,
}

impl ReferenceTrajectory {
    pub fn new(
        spec: &ModelSpec,
        xs: Vec<DVector<f64>>,
        xis: Vec<DVector<f64>>,
        us: &[DVector<f64>],
    ) -> Result<Self> {
        dim_check(xs.len() == xis.len() && xs.len() == us.len(), || {
            format!("{} states, {} interface values, {} inputs", xs.len(), xis.len(), us.len())
        })?;
        let phis: Vec<DVector<f64>> = xs.iter().zip(us).map(|(x, u)| spec.regressor(x, u)).collect();
        let total = trajectory_stats(spec.n_xi, spec.n_phi, &phis, &xis)?;
        Ok(Self {
            xs,
            xis,
            phis,
            total,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// `s′_{t:T}` recomputed from scratch.
    pub fn suffix_at(&self, t: usize) -> SuffStats {
        let t = t.min(self.len());
        trajectory_stats(self.total.n_xi(), self.total.n_phi(), &self.phis[t..], &self.xis[t..])
            .expect("reference vectors have matching lengths")
    }
}

/// `s′_{t+1:T} = s′_{t:T} − (φ′_t ξ′_tᵀ, φ′_t φ′_tᵀ, ξ′_t ξ′_tᵀ, 1)`.
pub fn suffix_decrement(
    suffix: &SuffStats,
    phi_ref: &DVector<f64>,
    xi_ref: &DVector<f64>,
) -> Result<SuffStats> {
    if suffix.chi3 - 1.0 < 0.0 {
        return Err(Error::ReferenceBookkeeping(format!(
            "removing a step from a suffix with count {}",
            suffix.chi3
        )));
    }
    let mut out = suffix.clone();
    out.retract(phi_ref, xi_ref)?;
    Ok(out)
}

/// Normalized log ancestor weights for the pinned particle:
/// `base^i · g(η^i) / g(η^i + suffix) · N(x′_next | f(x^i, ξ^i, u), Σω)`.
///
/// Evaluates every normalizer from scratch; the sweep uses the incremental
/// equivalent.
#[allow(clippy::too_many_arguments)]
pub fn ancestor_weights(
    base_log_weights: &[f64],
    etas: &[SuffStats],
    suffix: &SuffStats,
    x_ref_next: &DVector<f64>,
    states: &[DVector<f64>],
    xis: &[DVector<f64>],
    u: &DVector<f64>,
    spec: &ModelSpec,
) -> Result<Vec<f64>> {
    let n = base_log_weights.len();
    dim_check(etas.len() == n && states.len() == n && xis.len() == n, || {
        "ancestor weight inputs differ in length".into()
    })?;
    let mut logw = Vec::with_capacity(n);
    for i in 0..n {
        let mut joined = etas[i].clone();
        joined.accumulate(suffix)?;
        let ratio = log_normalizer(&etas[i])? - log_normalizer(&joined)?;
        let trans = spec.process_noise.log_pdf(&(x_ref_next - spec.transition(&states[i], &xis[i], u)));
        logw.push(base_log_weights[i] + ratio + trans);
    }
    normalize_ancestor(logw, 0)
}

fn normalize_ancestor(mut logw: Vec<f64>, t: usize) -> Result<Vec<f64>> {
    for w in logw.iter_mut() {
        if w.is_nan() {
            *w = f64::NEG_INFINITY;
        }
    }
    let lse = normalize_log_weights(&mut logw);
    if !lse.is_finite() {
        return Err(Error::AncestorDegeneracy { t });
    }
    Ok(logw)
}

/// Diagnostics of one conditional sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepDiagnostics {
    /// Fraction of steps at which the pinned particle took a foreign ancestor.
    pub ancestor_move_rate: f64,
    /// Fraction of time steps at which the new trajectory differs from the reference.
    pub reference_update_rate: f64,
    pub mean_ess: f64,
}

pub struct SweepOutput {
    pub reference: ReferenceTrajectory,
    pub diagnostics: SweepDiagnostics,
}

/// Steps between full refactorizations of the joined statistics, bounding
/// round-off from repeated rank-one updates and downdates.
const REFACTOR_EVERY: usize = 128;

/// One marginalized conditional SMC sweep.
pub fn csmc_sweep<R: Rng + ?Sized>(
    reference: &ReferenceTrajectory,
    data: &Dataset,
    spec: &ModelSpec,
    prior: &FactoredPosterior,
    cfg: &PgasConfig,
    rng: &mut R,
) -> Result<SweepOutput> {
    let len = data.len();
    dim_check(reference.len() == len, || {
        format!("reference has {} steps, data {len}", reference.len())
    })?;
    let n = cfg.n_particles;
    let pin = n - 1;

    // t = 0
    let key = next_key(rng);
    let mut tail = reference.suffix_at(1);
    let mut base = prior.clone();
    for (phi, xi) in reference.phis[1..].iter().zip(&reference.xis[1..]) {
        base.observe(phi, xi)?;
    }
    type Init = (DVector<f64>, DVector<f64>, FactoredPosterior, FactoredPosterior);
    let init: Vec<Init> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Init> {
            let (x, xi, eta, phi) = if i == pin {
                let mut eta = prior.clone();
                eta.observe(&reference.phis[0], &reference.xis[0])?;
                (reference.xs[0].clone(), reference.xis[0].clone(), eta, reference.phis[0].clone())
            } else {
                let mut r = stream(key, i as u64);
                let (x, xi, eta) = init_particle(spec, prior, &data.us[0], &mut r)?;
                let phi = spec.regressor(&x, &data.us[0]);
                (x, xi, eta, phi)
            };
            let mut joined = base.clone();
            joined.observe(&phi, &xi)?;
            Ok((x, xi, eta, joined))
        })
        .collect::<Result<_>>()?;
    let mut states = Vec::with_capacity(n);
    let mut xis = Vec::with_capacity(n);
    let mut etas = Vec::with_capacity(n);
    let mut joined = Vec::with_capacity(n);
    for (x, xi, e, j) in init {
        states.push(x);
        xis.push(xi);
        etas.push(e);
        joined.push(j);
    }
    let mut log_q = vec![-(n as f64).ln(); n];

    let mut hist_states = vec![states.clone()];
    let mut hist_xis = vec![xis.clone()];
    let mut hist_anc: Vec<Vec<usize>> = vec![(0..n).collect()];
    let mut moves = 0usize;
    let mut ess_sum = 0.0;

    for t in 1..len {
        let (y, u, u_prev) = (&data.ys[t], &data.us[t], &data.us[t - 1]);
        let la = lookahead(spec, &states, &xis, &log_q, u_prev, y, u, t)?;
        let mut ancestors = resample_categorical(&la.lambda, n - 1, cfg.resampler, rng)
            .map_err(|e| match e {
                Error::ParticleCollapse { reason, .. } => Error::ParticleCollapse { t, reason },
                other => other,
            })?;

        // Ancestor of the pinned particle; `joined` currently holds η_{t−1}^i + s′_{t:T}.
        let x_ref = &reference.xs[t];
        let base_w = match cfg.ancestor_base {
            AncestorBase::Filtering => &log_q,
            AncestorBase::FirstStage => &la.lambda,
        };
        let as_logw: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let trans = spec.process_noise.log_pdf(&(x_ref - &la.aux[i]));
                base_w[i] + etas[i].log_normalizer() - joined[i].log_normalizer() + trans
            })
            .collect();
        let as_logw = normalize_ancestor(as_logw, t)?;
        let a_pin = draw_index(&as_logw, rng, t)?;
        if a_pin != pin {
            moves += 1;
        }
        ancestors.push(a_pin);

        let phi_ref = &reference.phis[t];
        let xi_ref = &reference.xis[t];
        let refactor = t % REFACTOR_EVERY == 0;
        let key = next_key(rng);
        type Next = (DVector<f64>, DVector<f64>, FactoredPosterior, FactoredPosterior, f64);
        let next: Vec<Next> = (0..n)
            .into_par_iter()
            .map(|i| -> Result<Next> {
                let a = ancestors[i];
                if i == pin {
                    let mut eta = etas[a].clone();
                    eta.observe(phi_ref, xi_ref)?;
                    let ll = spec.measurement_noise.log_pdf(&(y - spec.measurement(x_ref, u)));
                    let mut j = joined[a].clone();
                    if refactor {
                        j = FactoredPosterior::from_stats(j.into_stats())?;
                    }
                    return Ok((x_ref.clone(), xi_ref.clone(), eta, j, ll - la.aux_loglik[a]));
                }
                let mut r = stream(key, i as u64);
                let (x, xi, eta, w, phi) =
                    propagate(spec, &la.aux[a], la.aux_loglik[a], &etas[a], y, u, &mut r)?;
                let mut j = joined[a].clone();
                j.exchange((&phi, &xi), (phi_ref, xi_ref))?;
                if refactor {
                    j = FactoredPosterior::from_stats(j.into_stats())?;
                }
                Ok((x, xi, eta, j, w))
            })
            .collect::<Result<_>>()?;
        let mut logw = Vec::with_capacity(n);
        states.clear();
        xis.clear();
        etas.clear();
        joined.clear();
        for (x, xi, e, j, w) in next {
            states.push(x);
            xis.push(xi);
            etas.push(e);
            joined.push(j);
            logw.push(w);
        }
        log_q = finish_weights(logw, t)?;
        ess_sum += 1.0 / log_q.iter().map(|w| (2.0 * w).exp()).sum::<f64>();
        tail = suffix_decrement(&tail, phi_ref, xi_ref)?;
        hist_states.push(states.clone());
        hist_xis.push(xis.clone());
        hist_anc.push(ancestors);
    }
    if tail.chi3.abs() > 1e-9 {
        return Err(Error::ReferenceBookkeeping(format!(
            "suffix count {} left after the final step",
            tail.chi3
        )));
    }

    let j = draw_index(&log_q, rng, len - 1)?;
    let mut new_xs = vec![DVector::zeros(0); len];
    let mut new_xis = vec![DVector::zeros(0); len];
    let mut idx = j;
    let mut changed = 0usize;
    for t in (0..len).rev() {
        new_xs[t] = hist_states[t][idx].clone();
        new_xis[t] = hist_xis[t][idx].clone();
        if new_xs[t] != reference.xs[t] || new_xis[t] != reference.xis[t] {
            changed += 1;
        }
        idx = hist_anc[t][idx];
    }
    let steps = (len - 1).max(1) as f64;
    Ok(SweepOutput {
        reference: ReferenceTrajectory::new(spec, new_xs, new_xis, &data.us)?,
        diagnostics: SweepDiagnostics {
            ancestor_move_rate: moves as f64 / steps,
            reference_update_rate: changed as f64 / len as f64,
            mean_ess: ess_sum / steps,
        },
    })
}

fn draw_index<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R, t: usize) -> Result<usize> {
    let w: Vec<f64> = log_w.iter().map(|l| l.exp()).collect();
    let dist = WeightedIndex::new(&w).map_err(|_| Error::AncestorDegeneracy { t })?;
    Ok(rng.sample(&dist))
}

/// State of a Gibbs run.
#[derive(Debug, Clone)]
pub struct PgasState {
    /// Completed sweeps.
    pub k: usize,
    pub reference: ReferenceTrajectory,
    /// `θ[0..=k]`
    pub draws: Vec<WeightNoiseSample>,
    /// Posterior statistics `prior + s(x_{0:T}[k], ξ_{0:T}[k])` per iteration.
    pub posterior_stats: Vec<SuffStats>,
    /// Sampled trajectories per iteration, when kept.
    pub trajectories: Vec<(Vec<DVector<f64>>, Vec<DVector<f64>>)>,
    pub diagnostics: Vec<SweepDiagnostics>,
}

/// Initial reference from one filter pass: sample `J ∝ q_T` and trace back.
pub fn filter_reference<R: Rng + ?Sized>(
    data: &Dataset,
    spec: &ModelSpec,
    prior: &MniwParams,
    cfg: &PgasConfig,
    rng: &mut R,
) -> Result<ReferenceTrajectory> {
    let ocfg = OnlineConfig {
        n_particles: cfg.n_particles,
        gamma: cfg.init_gamma,
        resampler: cfg.resampler,
        seed: 0,
    };
    let out = run_filter(spec, prior, data, &ocfg, true, rng, |_| Ok(()))?;
    let j = draw_index(&out.ensemble.log_weights, rng, data.len() - 1)?;
    let history = out.history.expect("history was requested");
    let (xs, xis) = history.trace(j);
    ReferenceTrajectory::new(spec, xs, xis, &data.us)
}

/// Alternate conditional sweeps and parameter draws for `cfg.iterations`
/// sweeps. `observer` is called after the initial draw and after each sweep.
pub fn pgas_run<R, F>(
    data: &Dataset,
    spec: &ModelSpec,
    prior: &MniwParams,
    cfg: &PgasConfig,
    initial: Option<ReferenceTrajectory>,
    rng: &mut R,
    mut observer: F,
) -> Result<PgasState>
where
    R: Rng + ?Sized,
    F: FnMut(&PgasState) -> Result<()>,
{
    cfg.validate()?;
    check_prior(spec, prior)?;
    spec.check_dataset(data)?;
    if data.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let prior_f = FactoredPosterior::from_params(prior)?;
    let reference = match initial {
        Some(r) => r,
        None => filter_reference(data, spec, prior, cfg, rng)?,
    };
    let mut state = PgasState {
        k: 0,
        reference,
        draws: Vec::with_capacity(cfg.iterations + 1),
        posterior_stats: Vec::with_capacity(cfg.iterations + 1),
        trajectories: Vec::new(),
        diagnostics: Vec::with_capacity(cfg.iterations),
    };
    record_draw(&mut state, &prior_f, cfg, rng)?;
    observer(&state)?;
    for k in 1..=cfg.iterations {
        let out = csmc_sweep(&state.reference, data, spec, &prior_f, cfg, rng)?;
        state.reference = out.reference;
        state.diagnostics.push(out.diagnostics);
        state.k = k;
        record_draw(&mut state, &prior_f, cfg, rng)?;
        log::debug!(
            "sweep {k}: ancestor moves {:.3}, reference update {:.3}",
            out.diagnostics.ancestor_move_rate,
            out.diagnostics.reference_update_rate
        );
        observer(&state)?;
    }
    Ok(state)
}

fn record_draw<R: Rng + ?Sized>(
    state: &mut PgasState,
    prior: &FactoredPosterior,
    cfg: &PgasConfig,
    rng: &mut R,
) -> Result<()> {
    let mut post = prior.stats().clone();
    post.accumulate(&state.reference.total)?;
    let theta = sample_mniw(&params_from_stats(&post)?, rng)?;
    state.draws.push(theta);
    state.posterior_stats.push(post);
    if cfg.keep_trajectories {
        state
            .trajectories
            .push((state.reference.xs.clone(), state.reference.xis.clone()));
    }
    Ok(())
}

impl PgasState {
    /// Average of the per-iteration posterior statistics after `burn_in`.
    pub fn mean_posterior_stats(&self, burn_in: usize) -> Option<SuffStats> {
        let kept = &self.posterior_stats[burn_in.min(self.posterior_stats.len().saturating_sub(1))..];
        let w = 1.0 / kept.len() as f64;
        SuffStats::weighted_sum(kept.iter().map(|s| (w, s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decrement_below_zero_is_an_error() {
        let s = SuffStats::zeros(1, 1);
        let v = DVector::zeros(1);
        assert!(matches!(suffix_decrement(&s, &v, &v), Err(Error::ReferenceBookkeeping(_))));
    }

    #[test]
    fn decrement_then_update_restores() {
        let mut s = SuffStats::zeros(1, 2);
        let phi = DVector::from_vec(vec![0.5, 2.0]);
        let xi = DVector::from_element(1, -1.5);
        s.observe(&phi, &xi).unwrap();
        s.observe(&phi, &xi).unwrap();
        let d = suffix_decrement(&s, &phi, &xi).unwrap();
        let mut r = d.clone();
        r.observe(&phi, &xi).unwrap();
        assert_eq!(r, s);
    }
}
