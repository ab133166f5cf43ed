//! Learn the friction of an electro-mechanical positioning system offline and
//! score it by open-loop forward simulation.
//!
//! With no argument a synthetic record is used. Pass `train.csv test.csv`
//! (columns `t,s,tau`) to use measured data.

use hybrid_sysid::casestudies::emps::{self, EmpsConfig, LinearFriction};
use hybrid_sysid::offline::{pgas_run, PgasConfig};
use hybrid_sysid::rng::stream;
use std::path::Path;
use std::sync::Arc;

fn main() -> hybrid_sysid::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = EmpsConfig::default();
    let hyper = emps::default_hyper();
    let (train, test) = if args.len() == 2 {
        (emps::load_emps(Path::new(&args[0]))?, emps::load_emps(Path::new(&args[1]))?)
    } else {
        let (a, _) = emps::synthesize(&cfg, &mut stream(3, 0))?;
        let (b, _) = emps::synthesize(&cfg, &mut stream(3, 2))?;
        (a, b)
    };
    let test = test.decimate(cfg.decimate)?;
    let syn = cfg.synthetic.clone();
    let truth: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>> =
        (args.len() != 2).then(|| Arc::new(move |v| syn.friction_at(v)) as _);
    let problem = emps::problem_from_record(&train, &cfg, &hyper, truth)?;

    let pcfg = PgasConfig {
        n_particles: 100,
        iterations: 40,
        keep_trajectories: false,
        ..PgasConfig::default()
    };
    let state = pgas_run(&problem.data, &problem.spec, &problem.prior, &pcfg, None, &mut stream(3, 1), |_| Ok(()))?;
    let post = hybrid_sysid::conjugate::params_from_stats(&state.mean_posterior_stats(10).expect("sweeps ran"))?;
    let basis = hyper.basis()?;
    let learned = |v: f64| (&post.mean * hybrid_sysid::basis::eval_basis(&basis, &[v]))[0];

    let sim = emps::forward_simulate(&test, cfg.mass, learned);
    let base = emps::forward_simulate(&test, cfg.mass, |v| LinearFriction::default().eval(v));
    println!("forward position RMSE: learned {:.2} mm, linear friction {:.2} mm",
        1e3 * emps::position_rmse(&test, &sim), 1e3 * emps::position_rmse(&test, &base));
    Ok(())
}
