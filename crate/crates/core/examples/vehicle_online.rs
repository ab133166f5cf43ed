//! Online learning of front and rear tire friction curves of a single-track
//! vehicle with odd basis functions of the slip angle.

use hybrid_sysid::casestudies::vehicle::{self, VehicleConfig};
use hybrid_sysid::eval::{wrmse, GridLayout};
use hybrid_sysid::online::{average_stats, run_filter, OnlineConfig};
use hybrid_sysid::rng::stream;

fn main() -> hybrid_sysid::Result<()> {
    let cfg = VehicleConfig::default();
    let problem = vehicle::problem(&cfg, &vehicle::default_hyper(), &mut stream(2, 0))?;
    let layouts = problem
        .functions
        .iter()
        .map(|f| GridLayout::new(f, 101))
        .collect::<hybrid_sysid::Result<Vec<_>>>()?;
    let ocfg = OnlineConfig::default();
    let out = run_filter(&problem.spec, &problem.prior, &problem.data, &ocfg, false, &mut stream(2, 1), |ens| {
        if ens.t % 250 == 0 {
            let stats = average_stats(ens)?;
            let front = wrmse(&layouts[0].evaluate(&stats)?)?[0];
            let rear = wrmse(&layouts[1].evaluate(&stats)?)?[0];
            println!("t = {:>5.1} s: wRMSE front {front:.4}, rear {rear:.4}", ens.t as f64 * cfg.dt);
        }
        Ok(())
    })?;

    let stats = average_stats(&out.ensemble)?;
    let grid = layouts[0].evaluate(&stats)?;
    println!("\nlearned front friction μ_f(α):");
    for g in (0..grid.len()).step_by(20) {
        let truth = grid.truth.as_ref().map_or(f64::NAN, |t| t[g][0]);
        println!("  α = {:>6.3}: {:>7.4} ± {:.4} (true {truth:.4})", grid.points[g][0], grid.mean[g][0], grid.variance[g][0].sqrt());
    }
    Ok(())
}
