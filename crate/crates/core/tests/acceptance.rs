//! Acceptance criteria 1–8. Each test prints one `criterion N: PASS|FAIL`
//! line before asserting. Criteria 6 and 7 are ignored by default: 6 takes
//! about 45 minutes and 7 needs the EMPS benchmark files. Run them with
//! `cargo test --release --test acceptance criterion_6 -- --ignored --nocapture` and
//! `EMPS_TRAIN_CSV=... EMPS_TEST_CSV=... cargo test --release --test acceptance criterion_7 -- --ignored --nocapture`.

mod support;

use hybrid_sysid::conjugate::{
    params_from_stats, posterior_update, predictive, sample_mniw, stats_from_params,
    trajectory_stats, batch_update, MniwParams, SuffStats,
};
use hybrid_sysid::experiment::{self, ExperimentConfig, Table, ALL_FILES};
use hybrid_sysid::offline::{ancestor_weights, pgas_run, PgasConfig};
use hybrid_sysid::online::{run_filter, OnlineConfig};
use hybrid_sysid::rng::seeded;
use hybrid_sysid::ssm::ModelSpec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;
use std::path::{Path, PathBuf};
use std::time::Instant;
use support::{chain_mean_se, dataset, pinned_prior, random_spd, regression_posterior, rel_diff, simpson_2d, ScalarLinear};

fn report(n: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {n}: {} ({name}) {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn random_params<R: Rng>(n_xi: usize, n_phi: usize, rng: &mut R) -> MniwParams {
    MniwParams::new(
        DMatrix::from_fn(n_xi, n_phi, |_, _| rng.random_range(-2.0..2.0)),
        random_spd(n_phi, 0.3, rng),
        random_spd(n_xi, 0.3, rng),
        n_xi as f64 + 1.5 + rng.random_range(0.0..5.0),
    )
    .unwrap()
}

fn rel_scalar(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn criterion_1_conjugacy_exactness() {
    let start = Instant::now();
    let mut rng = seeded(101);
    let (mut round, mut batch, mut oracle) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let n_xi = rng.random_range(1..=4);
        let n_phi = rng.random_range(1..=4);
        let len = rng.random_range(1..=50);
        let prior = random_params(n_xi, n_phi, &mut rng);
        let s0 = stats_from_params(&prior).unwrap();
        let back = params_from_stats(&s0).unwrap();
        round = round
            .max(rel_diff(&back.mean, &prior.mean))
            .max(rel_diff(&back.col_cov, &prior.col_cov))
            .max(rel_diff(&back.scale, &prior.scale))
            .max(rel_scalar(back.dof, prior.dof));

        let phis: Vec<_> = (0..len).map(|_| DVector::from_fn(n_phi, |_, _| rng.random_range(-2.0..2.0))).collect();
        let xis: Vec<_> = (0..len).map(|_| DVector::from_fn(n_xi, |_, _| rng.random_range(-2.0..2.0))).collect();
        let mut rec = s0.clone();
        for (phi, xi) in phis.iter().zip(&xis) {
            rec = posterior_update(&rec, phi, xi).unwrap();
        }
        let bat = batch_update(&s0, &trajectory_stats(n_xi, n_phi, &phis, &xis).unwrap()).unwrap();
        batch = batch
            .max(rel_diff(&rec.chi0, &bat.chi0))
            .max(rel_diff(&rec.chi1, &bat.chi1))
            .max(rel_diff(&rec.chi2, &bat.chi2))
            .max(rel_scalar(rec.chi3, bat.chi3));

        let got = params_from_stats(&rec).unwrap();
        let want = regression_posterior(&prior, &phis, &xis);
        oracle = oracle
            .max(rel_diff(&got.mean, &want.mean))
            .max(rel_diff(&got.col_cov, &want.col_cov))
            .max(rel_diff(&got.scale, &want.scale))
            .max(rel_scalar(got.dof, want.dof));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "conjugacy exactness",
        round <= 1e-10 && batch <= 1e-9 && oracle <= 1e-9 && secs < 10.0,
        format!("round trip {round:.1e}, recursive vs batch {batch:.1e}, oracle {oracle:.1e}, {secs:.1}s"),
    );
}

#[test]
fn criterion_2_predictive_moments() {
    let start = Instant::now();
    let p = MniwParams::new(
        DMatrix::from_row_slice(2, 3, &[0.5, -1.0, 0.2, 1.5, 0.3, -0.7]),
        DMatrix::from_row_slice(3, 3, &[0.6, 0.1, 0.0, 0.1, 0.4, 0.05, 0.0, 0.05, 0.3]),
        DMatrix::from_row_slice(2, 2, &[1.2, 0.3, 0.3, 0.8]),
        8.0,
    )
    .unwrap();
    let phi = DVector::from_vec(vec![0.8, -0.5, 1.1]);
    let t = predictive(&stats_from_params(&p).unwrap(), &phi).unwrap();
    let cov = t.covariance().unwrap();

    let n = 200_000;
    let mut rng = seeded(102);
    let mut sum = DVector::zeros(2);
    let mut outer = DMatrix::zeros(2, 2);
    for _ in 0..n {
        let d = sample_mniw(&p, &mut rng).unwrap();
        let l = d.noise_cov.clone().cholesky().unwrap().l();
        let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let xi = &d.weights * &phi + l * z;
        sum += &xi;
        outer += &xi * xi.transpose();
    }
    let nf = n as f64;
    let mean = &sum / nf;
    let emp = (&outer - &mean * mean.transpose() * nf) / (nf - 1.0);
    let mut worst_se = 0.0f64;
    let mut worst_cov = 0.0f64;
    for i in 0..2 {
        let se = (emp[(i, i)] / nf).sqrt();
        worst_se = worst_se.max((mean[i] - t.mu[i]).abs() / se);
        for j in 0..2 {
            let scale = (cov[(i, i)] * cov[(j, j)]).sqrt();
            worst_cov = worst_cov.max((emp[(i, j)] - cov[(i, j)]).abs() / scale);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        "predictive moments",
        worst_se < 3.0 && worst_cov < 0.05 && secs < 60.0,
        format!("mean {worst_se:.2} SE, covariance {:.2}%, {secs:.1}s", 100.0 * worst_cov),
    );
}

/// Scalar normal-inverse-gamma log density of `(a, σ²)` under `{m, v, ψ, ν}`:
/// `a | σ² ~ N(m, σ² v)`, `σ² ~ IG(ν/2, ψ/2)`.
fn nig_log_density(p: &MniwParams, a: f64, sigma2: f64) -> f64 {
    let (m, v, psi, nu) = (p.mean[(0, 0)], p.col_cov[(0, 0)], p.scale[(0, 0)], p.dof);
    let normal = -0.5 * (2.0 * std::f64::consts::PI * sigma2 * v).ln() - (a - m).powi(2) / (2.0 * sigma2 * v);
    let (alpha, beta) = (0.5 * nu, 0.5 * psi);
    let inv_gamma = alpha * beta.ln() - ln_gamma(alpha) - (alpha + 1.0) * sigma2.ln() - beta / sigma2;
    normal + inv_gamma
}

/// `log ∫∫ Π_s N(ξ′_s | a φ′_s, σ²) p(a, σ² | η) da dσ²` by quadrature in `(a, ln σ²)`.
fn log_suffix_evidence(eta: &MniwParams, phis: &[f64], xis: &[f64]) -> f64 {
    let log_f = |a: f64, u: f64| {
        let s2 = u.exp();
        let lik: f64 = phis
            .iter()
            .zip(xis)
            .map(|(p, x)| -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (x - a * p).powi(2) / (2.0 * s2))
            .sum();
        nig_log_density(eta, a, s2) + lik + u
    };
    // Centre the box on the joined posterior, which the integrand is proportional to.
    let pstar = regression_posterior(
        eta,
        &phis.iter().map(|&p| DVector::from_element(1, p)).collect::<Vec<_>>(),
        &xis.iter().map(|&x| DVector::from_element(1, x)).collect::<Vec<_>>(),
    );
    let s2_mode = pstar.scale[(0, 0)] / (pstar.dof + 2.0);
    let a_c = pstar.mean[(0, 0)];
    let a_w = 25.0 * (pstar.scale[(0, 0)] * pstar.col_cov[(0, 0)] / pstar.dof).sqrt();
    let u_c = s2_mode.ln();
    let u_w = 12.0 * (2.0 / pstar.dof).sqrt() + 4.0;
    let peak = log_f(a_c, u_c);
    let area = simpson_2d(&|a, u| (log_f(a, u) - peak).exp(), (a_c - a_w, a_c + a_w), (u_c - u_w, u_c + u_w), 1e-10);
    peak + area.ln()
}

#[test]
fn criterion_3_ancestor_weight_oracle() {
    let start = Instant::now();
    let mut rng = seeded(103);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(3..=6);
        let a = rng.random_range(0.5..0.95);
        let q = rng.random_range(0.1..0.5);
        let spec = ModelSpec::builder(1, 1, 1, 0)
            .transition(move |x, xi, _| x * a + xi)
            .measurement(|x, _| x.clone())
            .regressor(1, |x, _| x.clone())
            .process_noise(DMatrix::from_element(1, 1, q))
            .measurement_noise(DMatrix::from_element(1, 1, 0.1))
            .build()
            .unwrap();
        let prior = MniwParams::new(
            DMatrix::from_element(1, 1, rng.random_range(-0.5..0.5)),
            DMatrix::from_element(1, 1, rng.random_range(0.5..2.0)),
            DMatrix::from_element(1, 1, rng.random_range(0.2..1.0)),
            rng.random_range(4.0..8.0),
        )
        .unwrap();
        let s0 = stats_from_params(&prior).unwrap();
        let suffix_len = rng.random_range(2..=8);
        let suf_phi: Vec<f64> = (0..suffix_len).map(|_| rng.random_range(-2.0..2.0)).collect();
        let suf_xi: Vec<f64> = suf_phi.iter().map(|p| 0.3 * p + 0.5 * rng.random_range(-1.0..1.0)).collect();
        let suffix = trajectory_stats(
            1,
            1,
            &suf_phi.iter().map(|&p| DVector::from_element(1, p)).collect::<Vec<_>>(),
            &suf_xi.iter().map(|&x| DVector::from_element(1, x)).collect::<Vec<_>>(),
        )
        .unwrap();
        let mut etas: Vec<SuffStats> = Vec::new();
        let mut states = Vec::new();
        let mut xis = Vec::new();
        for _ in 0..n {
            let mut e = s0.clone();
            for _ in 0..rng.random_range(1..=6) {
                let p = rng.random_range(-2.0..2.0);
                e = posterior_update(&e, &DVector::from_element(1, p), &DVector::from_element(1, rng.random_range(-1.0..1.0)))
                    .unwrap();
            }
            etas.push(e);
            states.push(DVector::from_element(1, rng.random_range(-1.0..1.0)));
            xis.push(DVector::from_element(1, rng.random_range(-0.5..0.5)));
        }
        let mut base: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.0)).collect();
        let lse = base.iter().map(|b| b.exp()).sum::<f64>().ln();
        base.iter_mut().for_each(|b| *b -= lse);
        let x_next = DVector::from_element(1, rng.random_range(-1.0..1.0));
        let u = DVector::zeros(0);

        let got = ancestor_weights(&base, &etas, &suffix, &x_next, &states, &xis, &u, &spec).unwrap();
        let mut want: Vec<f64> = (0..n)
            .map(|i| {
                let eta = params_from_stats(&etas[i]).unwrap();
                let mean = a * states[i][0] + xis[i][0];
                let trans = -0.5 * (2.0 * std::f64::consts::PI * q).ln() - (x_next[0] - mean).powi(2) / (2.0 * q);
                base[i] + log_suffix_evidence(&eta, &suf_phi, &suf_xi) + trans
            })
            .collect();
        let lse = want.iter().map(|w| w.exp()).sum::<f64>().ln();
        want.iter_mut().for_each(|w| *w -= lse);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max(rel_scalar(g.exp(), w.exp()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        "ancestor-weight oracle",
        worst < 1e-3 && secs < 300.0,
        format!("max relative error {worst:.1e} over 20 configurations, {secs:.1}s"),
    );
}

#[test]
fn criterion_4_filter_consistency() {
    let start = Instant::now();
    let model = ScalarLinear {
        a: 0.9,
        q: 0.5,
        r: 0.2,
        m0: 0.0,
        p0: 1.0,
    };
    let spec = model.additive_model();
    let cfg = OnlineConfig {
        n_particles: 1000,
        gamma: 1.0,
        ..OnlineConfig::default()
    };
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let (_, ys) = model.simulate(200, 1000 + seed);
        let (km, _) = model.kalman_filter(&ys);
        let out = run_filter(&spec, &pinned_prior(), &dataset(&ys), &cfg, false, &mut seeded(seed), |_| Ok(())).unwrap();
        let se: f64 = out.state_means.iter().zip(&km).map(|(m, k)| (m[0] - k).powi(2)).sum();
        worst = worst.max((se / ys.len() as f64).sqrt() / model.stationary_std());
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        "filter consistency",
        worst < 0.05 && secs < 120.0,
        format!("worst RMSE {:.2}% of the stationary std over 20 seeds, {secs:.1}s", 100.0 * worst),
    );
}

#[test]
fn criterion_5_pgas_invariance() {
    let start = Instant::now();
    let model = ScalarLinear {
        a: 0.8,
        q: 0.3,
        r: 0.2,
        m0: 0.0,
        p0: 1.0,
    };
    let (_, ys) = model.simulate(20, 105);
    let (sm, _) = model.rts_smoother(&ys);
    let prior = MniwParams::new(
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 0.5),
        4.0,
    )
    .unwrap();
    // 2000 sweeps pooled over four independent chains; the standard error of
    // each chain accounts for its autocorrelation.
    let (chains, sweeps) = (4, 500);
    let cfg = PgasConfig {
        n_particles: 10,
        iterations: sweeps,
        ..PgasConfig::default()
    };
    let mut mean = vec![0.0; ys.len()];
    let mut var = vec![0.0; ys.len()];
    for c in 0..chains {
        let mut paths: Vec<Vec<f64>> = vec![Vec::with_capacity(sweeps); ys.len()];
        pgas_run(&dataset(&ys), &model.decoupled_model(), &prior, &cfg, None, &mut seeded(500 + c), |s| {
            if s.k > 0 {
                for (t, x) in s.reference.xs.iter().enumerate() {
                    paths[t].push(x[0]);
                }
            }
            Ok(())
        })
        .unwrap();
        for (t, p) in paths.iter().enumerate() {
            let (m, se) = chain_mean_se(p);
            mean[t] += m / chains as f64;
            var[t] += se * se / (chains * chains) as f64;
        }
    }
    let worst = (0..ys.len()).map(|t| (mean[t] - sm[t]).abs() / var[t].sqrt()).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    report(
        5,
        "PGAS invariance",
        worst < 3.0 && secs < 600.0,
        format!("worst deviation {worst:.2} MC SE over {} steps, {chains}x{sweeps} sweeps, {secs:.1}s", ys.len()),
    );
}

fn run_config(name: &str, out: &Path) -> std::collections::BTreeMap<String, f64> {
    let cfg = ExperimentConfig::load(&configs().join(name)).unwrap();
    experiment::run(&cfg, out).unwrap().metrics
}

#[test]
#[ignore = "runs the shipped oscillator configs, about 45 minutes on one core"]
fn criterion_6_oscillator_learning_curves() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let online = run_config("oscillator_online.json", &dir.path().join("online"));
    let online_secs = start.elapsed().as_secs_f64();
    let curve = Table::read(&dir.path().join("online").join("errors.csv")).unwrap();
    let steps = curve.column("step").unwrap();
    let err = curve.column("wrmse_xi0").unwrap();
    let last = *steps.last().unwrap();
    let at = |s: f64| err[steps.iter().position(|v| *v == s).expect("grid step recorded")];
    let early = at((0.2 * last).round());
    let fin = *err.last().unwrap();
    let ratio = fin / early;

    let start = Instant::now();
    let offline = run_config("oscillator_offline.json", &dir.path().join("offline"));
    let offline_secs = start.elapsed().as_secs_f64();
    let off = offline["averaged_wrmse_xi0"];
    assert_eq!(online["final_wrmse_xi0"], fin);
    report(
        6,
        "oscillator learning curves",
        ratio < 0.5 && off <= fin && online_secs < 300.0 && offline_secs < 7200.0,
        format!(
            "online wRMSE {:.3} at t=0, {early:.3} at 0.2T, {fin:.3} at T (ratio {ratio:.2}, {online_secs:.0}s); \
             offline K=800 averaged {off:.3}, last draw {:.3} ({offline_secs:.0}s)",
            err[0], offline["final_wrmse_xi0"]
        ),
    );
}

#[test]
#[ignore = "needs the EMPS benchmark files and several hours"]
fn criterion_7_emps_benchmark() {
    let (train, test) = match (std::env::var("EMPS_TRAIN_CSV"), std::env::var("EMPS_TEST_CSV")) {
        (Ok(a), Ok(b)) => (a, b),
        _ => {
            report(7, "EMPS benchmark", false, "EMPS_TRAIN_CSV and EMPS_TEST_CSV are not set".into());
            return;
        }
    };
    let start = Instant::now();
    let mut cfg = ExperimentConfig::load(&configs().join("emps_offline.json")).unwrap();
    cfg.case_study.params["train_csv"] = train.into();
    cfg.case_study.params["test_csv"] = test.into();
    cfg.particles = 200;
    cfg.iterations = 800;
    let dir = tempfile::tempdir().unwrap();
    let m = experiment::run(&cfg, dir.path()).unwrap().metrics;
    let secs = start.elapsed().as_secs_f64();
    let learned_mm = 1e3 * m["forward_rmse_learned"];
    let linear_mm = 1e3 * m["forward_rmse_linear_friction"];
    report(
        7,
        "EMPS benchmark",
        learned_mm <= 9.0 && secs < 4.0 * 3600.0,
        format!("position RMSE {learned_mm:.2} mm (linear friction {linear_mm:.2} mm), {secs:.0}s"),
    );
}

fn run_in_pool(cfg: &ExperimentConfig, threads: usize, out: &Path) {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| experiment::run(cfg, out))
        .unwrap();
}

#[test]
fn criterion_8_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut differing = Vec::new();
    let mut compared = 0;
    for name in ["vehicle_online.json", "linear_gaussian_offline.json"] {
        let mut cfg = ExperimentConfig::load(&configs().join(name)).unwrap();
        if cfg.case_study.name == "vehicle" {
            cfg.case_study.params = serde_json::json!({ "duration": 5.0 });
        } else {
            cfg.iterations = 40;
            cfg.burn_in = Some(10);
        }
        let outs = [(1, "a"), (4, "b"), (1, "c")].map(|(threads, tag)| {
            let out = dir.path().join(format!("{name}-{tag}"));
            run_in_pool(&cfg, threads, &out);
            out
        });
        for f in ALL_FILES {
            let first = std::fs::read(outs[0].join(f)).unwrap();
            for o in &outs[1..] {
                compared += 1;
                if std::fs::read(o.join(f)).unwrap() != first {
                    differing.push(format!("{name}/{f}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        8,
        "determinism",
        differing.is_empty() && secs < 300.0,
        format!("{compared} file comparisons across 1 and 4 threads, differing: {differing:?}, {secs:.1}s"),
    );
}
