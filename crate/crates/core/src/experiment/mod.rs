//! Configuration-driven experiments on the registered case studies.
//!
//! [`run`] writes five files into the output directory: the posterior state
//! and interface trajectory, the learned functions on a grid, the error curve,
//! the final posterior, and a metadata record with the resolved configuration.
//! The metadata is written even when the run fails.

pub mod config;
pub mod io;

pub use config::{validate, CaseStudy, CaseStudyRef, ExperimentConfig, Mode, ValidationReport, Violation, REGISTRY};
pub use io::{read_meta, read_posterior, PosteriorFile, RunMeta, RunStatus, Table, ALL_FILES};

use nalgebra::DVector;
use std::collections::BTreeMap;
use std::path::Path;

use crate::basis::eval_basis;
use crate::casestudies::{emps, linear, oscillator, vehicle, BasisHyper, Problem};
use crate::conjugate::{params_from_stats, SuffStats};
use crate::error::{Error, Result};
use crate::eval::{wrmse, GridLayout};
use crate::offline::{pgas_run, PgasConfig};
use crate::online::{average_stats, run_filter, weighted_moments, OnlineConfig};
use crate::rng::stream;

/// Build the model, prior and data of a case study. Simulated data use the
/// random stream `(seed, 0)`; inference uses `(seed, 1)`.
pub fn build_problem(case: &CaseStudy, hyper: &BasisHyper, seed: u64) -> Result<Problem> {
    let mut rng = stream(seed, 0);
    match case {
        CaseStudy::Oscillator(c) => oscillator::problem(c, hyper, &mut rng),
        CaseStudy::Vehicle(c) => vehicle::problem(c, hyper, &mut rng),
        CaseStudy::LinearGaussian(c) => linear::problem(c, hyper, &mut rng),
        CaseStudy::Emps(c) => match &c.train_csv {
            Some(path) => emps::problem_from_record(&emps::load_emps(path)?, c, hyper, None),
            None => emps::problem(c, hyper, &mut rng),
        },
    }
}

/// Metrics of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub metrics: BTreeMap<String, f64>,
}

/// Validate, run and write all artifacts into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    let report = validate(cfg);
    if !report.is_ok() {
        return Err(Error::Config(report.to_string().trim_end().to_string()));
    }
    std::fs::create_dir_all(out_dir)?;
    let resolved = cfg.resolved()?;
    let mut metrics = BTreeMap::new();
    let result = execute(&resolved, out_dir, &mut metrics);
    let meta = RunMeta {
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        status: if result.is_ok() { RunStatus::Ok } else { RunStatus::Error },
        error: result.as_ref().err().map(ToString::to_string),
        seed: resolved.seed,
        config: resolved,
        files: ALL_FILES.iter().map(|s| s.to_string()).collect(),
        metrics: metrics.clone(),
    };
    io::write_json(&meta, &out_dir.join(io::RUN_META_JSON))?;
    result.map(|()| RunReport { metrics })
}

/// Running state and output errors accumulated along a trajectory.
struct ErrorCurve {
    table: Table,
    layouts: Vec<GridLayout>,
}

impl ErrorCurve {
    fn new(problem: &Problem, grid_points: usize, step_name: &str) -> Result<Self> {
        let layouts = problem
            .functions
            .iter()
            .map(|f| GridLayout::new(f, grid_points))
            .collect::<Result<Vec<_>>>()?;
        let mut headers = vec![step_name.to_string()];
        for l in &layouts {
            headers.extend(l.outputs.iter().map(|o| format!("wrmse_xi{o}")));
        }
        headers.extend(["state_rmse".into(), "output_rmse".into()]);
        Ok(Self {
            table: Table::new(headers),
            layouts,
        })
    }

    fn record(&mut self, step: usize, stats: &SuffStats, state_rmse: f64, output_rmse: f64) -> Result<()> {
        let mut row = vec![step as f64];
        for l in &self.layouts {
            let grid = l.evaluate(stats)?;
            match grid.truth {
                Some(_) => row.extend(wrmse(&grid)?),
                None => row.extend(std::iter::repeat_n(f64::NAN, l.outputs.len())),
            }
        }
        row.extend([state_rmse, output_rmse]);
        self.table.push(row);
        Ok(())
    }

    fn last(&self) -> Option<(&Vec<String>, &Vec<f64>)> {
        self.table.rows.last().map(|r| (&self.table.headers, r))
    }
}

/// Sum of squared errors of states against the truth and of measurements
/// against their predictions.
#[derive(Default)]
struct Sse {
    state: f64,
    state_n: usize,
    output: f64,
    output_n: usize,
}

impl Sse {
    fn add(&mut self, problem: &Problem, t: usize, x: &DVector<f64>) {
        if let Some(truth) = &problem.true_states {
            self.state += (x - &truth[t]).norm_squared();
            self.state_n += x.len();
        }
        let y_hat = problem.spec.measurement(x, &problem.data.us[t]);
        self.output_n += y_hat.len();
        self.output += (&problem.data.ys[t] - y_hat).norm_squared();
    }

    fn rmse(&self) -> (f64, f64) {
        let f = |s: f64, n: usize| if n == 0 { f64::NAN } else { (s / n as f64).sqrt() };
        (f(self.state, self.state_n), f(self.output, self.output_n))
    }
}

fn trajectory_headers(problem: &Problem) -> Vec<String> {
    let spec = &problem.spec;
    let mut h = vec!["step".to_string(), "time".to_string()];
    for i in 0..spec.n_x {
        h.extend([format!("x{i}_mean"), format!("x{i}_std")]);
    }
    for j in 0..spec.n_xi {
        h.extend([format!("xi{j}_mean"), format!("xi{j}_std")]);
    }
    h.extend((0..spec.n_x).map(|i| format!("x{i}_true")));
    h.extend((0..spec.n_xi).map(|j| format!("xi{j}_true")));
    h.extend((0..spec.n_y).map(|k| format!("y{k}")));
    h
}

fn trajectory_row(problem: &Problem, t: usize, x: (&DVector<f64>, DVector<f64>), xi: (&DVector<f64>, DVector<f64>)) -> Vec<f64> {
    let spec = &problem.spec;
    let mut row = vec![t as f64, t as f64 * problem.dt];
    for i in 0..spec.n_x {
        row.extend([x.0[i], x.1[i]]);
    }
    for j in 0..spec.n_xi {
        row.extend([xi.0[j], xi.1[j]]);
    }
    match &problem.true_states {
        Some(s) => row.extend(s[t].iter().copied()),
        None => row.extend(std::iter::repeat_n(f64::NAN, spec.n_x)),
    }
    match &problem.true_xis {
        Some(s) => row.extend(s[t].iter().copied()),
        None => row.extend(std::iter::repeat_n(f64::NAN, spec.n_xi)),
    }
    row.extend(problem.data.ys[t].iter().copied());
    row
}

fn write_function_grid(layouts: &[GridLayout], stats: &SuffStats, path: &Path) -> Result<()> {
    let dims = layouts.iter().map(|l| l.points[0].len()).max().unwrap_or(0);
    let mut headers = vec!["target".to_string(), "output".to_string()];
    headers.extend((0..dims).map(|d| format!("z{d}")));
    headers.extend(["mean".into(), "std".into(), "truth".into()]);
    let mut table = Table::new(headers);
    for (i, l) in layouts.iter().enumerate() {
        let grid = l.evaluate(stats)?;
        for (o, &out) in grid.outputs.iter().enumerate() {
            for g in 0..grid.len() {
                let mut row = vec![i as f64, out as f64];
                row.extend(grid.points[g].iter().copied());
                row.extend(std::iter::repeat_n(f64::NAN, dims - grid.points[g].len()));
                row.push(grid.mean[g][o]);
                row.push(grid.variance[g][o].sqrt());
                row.push(grid.truth.as_ref().map_or(f64::NAN, |t| t[g][o]));
                table.push(row);
            }
        }
    }
    table.write(path)
}

fn std_of(cov: &nalgebra::DMatrix<f64>) -> DVector<f64> {
    cov.diagonal().map(|v| v.max(0.0).sqrt())
}

fn execute(cfg: &ExperimentConfig, out_dir: &Path, metrics: &mut BTreeMap<String, f64>) -> Result<()> {
    let case = cfg.case_study.resolve()?;
    let hyper = cfg.basis.clone().expect("resolved config has a basis");
    let problem = build_problem(&case, &hyper, cfg.seed)?;
    if !problem.prior.has_noise_mean() {
        log::warn!(
            "prior nu = {} <= n_xi + 1: the noise covariance has no prior mean",
            problem.prior.dof
        );
    }
    let mut rng = stream(cfg.seed, 1);
    let n = problem.data.len();
    let mut traj = Table::new(trajectory_headers(&problem));
    let final_stats = match cfg.mode {
        Mode::Online => {
            let mut curve = ErrorCurve::new(&problem, cfg.grid_points, "step")?;
            let ocfg = OnlineConfig {
                n_particles: cfg.particles,
                gamma: cfg.gamma,
                resampler: cfg.resampler,
                seed: cfg.seed,
            };
            let mut sse = Sse::default();
            let mut t = 0;
            let out = run_filter(&problem.spec, &problem.prior, &problem.data, &ocfg, false, &mut rng, |ens| {
                let w = ens.weights();
                let (xm, xc) = weighted_moments(&ens.states, &w);
                let (xim, xic) = weighted_moments(&ens.xis, &w);
                traj.push(trajectory_row(&problem, t, (&xm, std_of(&xc)), (&xim, std_of(&xic))));
                sse.add(&problem, t, &xm);
                if t % cfg.eval_every == 0 || t + 1 == n {
                    let (s, o) = sse.rmse();
                    curve.record(t, &average_stats(ens)?, s, o)?;
                }
                t += 1;
                Ok(())
            })?;
            metrics.insert("mean_ess".into(), out.ess.iter().sum::<f64>() / n as f64);
            summarize(&curve, metrics);
            curve.table.write(&out_dir.join(io::ERRORS_CSV))?;
            let stats = average_stats(&out.ensemble)?;
            write_function_grid(&curve.layouts, &stats, &out_dir.join(io::FUNCTION_GRID_CSV))?;
            stats
        }
        Mode::Offline => {
            let mut curve = ErrorCurve::new(&problem, cfg.grid_points, "iteration")?;
            let pcfg = PgasConfig {
                n_particles: cfg.particles,
                iterations: cfg.iterations,
                resampler: cfg.resampler,
                ancestor_base: cfg.ancestor_base,
                init_gamma: 1.0,
                keep_trajectories: true,
            };
            let state = pgas_run(&problem.data, &problem.spec, &problem.prior, &pcfg, None, &mut rng, |s| {
                if s.k % cfg.eval_every == 0 || s.k == cfg.iterations {
                    let mut sse = Sse::default();
                    for (t, x) in s.reference.xs.iter().enumerate() {
                        sse.add(&problem, t, x);
                    }
                    let (a, b) = sse.rmse();
                    curve.record(s.k, s.posterior_stats.last().expect("one draw per sweep"), a, b)?;
                }
                Ok(())
            })?;
            let burn_in = cfg.burn_in();
            let kept = &state.trajectories[burn_in.min(state.trajectories.len() - 1)..];
            let w = vec![1.0; kept.len()];
            for t in 0..n {
                let xs: Vec<_> = kept.iter().map(|(x, _)| x[t].clone()).collect();
                let xis: Vec<_> = kept.iter().map(|(_, xi)| xi[t].clone()).collect();
                let (xm, xc) = weighted_moments(&xs, &w);
                let (xim, xic) = weighted_moments(&xis, &w);
                traj.push(trajectory_row(&problem, t, (&xm, std_of(&xc)), (&xim, std_of(&xic))));
            }
            let rates = &state.diagnostics;
            metrics.insert(
                "ancestor_move_rate".into(),
                rates.iter().map(|d| d.ancestor_move_rate).sum::<f64>() / rates.len() as f64,
            );
            summarize(&curve, metrics);
            curve.table.write(&out_dir.join(io::ERRORS_CSV))?;
            let stats = state
                .mean_posterior_stats(burn_in)
                .ok_or_else(|| Error::Config("no sweeps to average".into()))?;
            for l in curve.layouts.iter().filter(|l| l.truth.is_some()) {
                let e = wrmse(&l.evaluate(&stats)?)?;
                for (o, v) in l.outputs.iter().zip(e) {
                    metrics.insert(format!("averaged_wrmse_xi{o}"), v);
                }
            }
            write_function_grid(&curve.layouts, &stats, &out_dir.join(io::FUNCTION_GRID_CSV))?;
            if let CaseStudy::Emps(c) = &case {
                emps_forward_metrics(c, &hyper, &stats, &problem, metrics)?;
            }
            stats
        }
    };
    traj.write(&out_dir.join(io::TRAJECTORY_CSV))?;
    let posterior = PosteriorFile {
        params: params_from_stats(&final_stats)?,
        stats: final_stats,
    };
    io::write_json(&posterior, &out_dir.join(io::POSTERIOR_JSON))
}

fn summarize(curve: &ErrorCurve, metrics: &mut BTreeMap<String, f64>) {
    if let Some((headers, row)) = curve.last() {
        for (h, v) in headers.iter().zip(row).skip(1) {
            if v.is_finite() {
                metrics.insert(format!("final_{h}"), *v);
            }
        }
    }
}

/// Forward simulation with the learned friction and with the classical linear
/// model, on the test record if given and on the training data otherwise.
fn emps_forward_metrics(
    c: &emps::EmpsConfig,
    hyper: &BasisHyper,
    stats: &SuffStats,
    problem: &Problem,
    metrics: &mut BTreeMap<String, f64>,
) -> Result<()> {
    let rec = match &c.test_csv {
        Some(path) => emps::load_emps(path)?.decimate(c.decimate)?,
        None => emps::EmpsRecord {
            t: (0..problem.data.len()).map(|k| k as f64 * problem.dt).collect(),
            s: problem.data.ys.iter().map(|y| y[0]).collect(),
            tau: problem.data.us.iter().map(|u| u[0]).collect(),
        },
    };
    let p = params_from_stats(stats)?;
    let basis = hyper.basis()?;
    let learned = emps::forward_simulate(&rec, c.mass, |v| (&p.mean * eval_basis(&basis, &[v]))[0]);
    let base = emps::LinearFriction::default();
    let linear = emps::forward_simulate(&rec, c.mass, |v| base.eval(v));
    metrics.insert("forward_rmse_learned".into(), emps::position_rmse(&rec, &learned));
    metrics.insert("forward_rmse_linear_friction".into(), emps::position_rmse(&rec, &linear));
    Ok(())
}
