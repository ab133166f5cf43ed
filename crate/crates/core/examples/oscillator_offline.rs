//! Offline learning of the oscillator force with marginalized particle Gibbs
//! with ancestor sampling.
//!
//! `cargo run --release --example oscillator_offline -- [sweeps] [particles]`

use hybrid_sysid::casestudies::oscillator::{self, OscillatorConfig};
use hybrid_sysid::eval::{wrmse, GridLayout};
use hybrid_sysid::offline::{pgas_run, PgasConfig};
use hybrid_sysid::rng::stream;

fn main() -> hybrid_sysid::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let sweeps = args.next().flatten().unwrap_or(40);
    let particles = args.next().flatten().unwrap_or(100);
    let problem = oscillator::problem(&OscillatorConfig::default(), &oscillator::default_hyper(), &mut stream(1, 0))?;
    let layout = GridLayout::new(&problem.functions[0], 51)?;
    let cfg = PgasConfig {
        n_particles: particles,
        iterations: sweeps,
        keep_trajectories: false,
        ..PgasConfig::default()
    };
    let every = (sweeps / 10).max(1);
    let state = pgas_run(&problem.data, &problem.spec, &problem.prior, &cfg, None, &mut stream(1, 1), |s| {
        if s.k % every == 0 {
            let e = wrmse(&layout.evaluate(s.posterior_stats.last().expect("one per sweep"))?)?;
            let moves = s.diagnostics.last().map_or(0.0, |d| d.ancestor_move_rate);
            println!("sweep {:>4}: wRMSE {:.3}, ancestor moves {:.2}", s.k, e[0], moves);
        }
        Ok(())
    })?;
    let avg = state.mean_posterior_stats(sweeps / 4).expect("at least one sweep");
    println!("wRMSE of the averaged posterior: {:.3}", wrmse(&layout.evaluate(&avg)?)?[0]);
    Ok(())
}
