//! Online learning of the spring-damper force of a mass oscillator from
//! displacement measurements only.
//!
//! `cargo run --release --example oscillator_online -- [particles]`

use hybrid_sysid::casestudies::oscillator::{self, OscillatorConfig};
use hybrid_sysid::eval::{wrmse, GridLayout};
use hybrid_sysid::online::{average_stats, run_filter, OnlineConfig};
use hybrid_sysid::rng::stream;

fn main() -> hybrid_sysid::Result<()> {
    let particles = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let cfg = OscillatorConfig::default();
    let problem = oscillator::problem(&cfg, &oscillator::default_hyper(), &mut stream(1, 0))?;
    let layout = GridLayout::new(&problem.functions[0], 51)?;
    let ocfg = OnlineConfig {
        n_particles: particles,
        gamma: 0.999,
        ..OnlineConfig::default()
    };

    println!("{:>6} {:>8} {:>8}", "t [s]", "wRMSE", "ESS");
    let out = run_filter(&problem.spec, &problem.prior, &problem.data, &ocfg, false, &mut stream(1, 1), |ens| {
        if ens.t % 75 == 0 {
            let e = wrmse(&layout.evaluate(&average_stats(ens)?)?)?;
            println!("{:>6.1} {:>8.3} {:>8.1}", ens.t as f64 * cfg.dt, e[0], ens.ess());
        }
        Ok(())
    })?;

    let truth = problem.true_states.expect("simulated");
    let rmse = hybrid_sysid::eval::rmse_vectors(&out.state_means, &truth)?;
    println!("state RMSE {rmse:.4}");
    Ok(())
}
