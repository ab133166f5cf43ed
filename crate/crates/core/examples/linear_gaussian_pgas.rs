//! Particle Gibbs with ancestor sampling on a linear-Gaussian model, where the
//! smoothing posterior of the state is known in closed form.

use hybrid_sysid::conjugate::MniwParams;
use hybrid_sysid::offline::{pgas_run, PgasConfig};
use hybrid_sysid::rng::seeded;
use hybrid_sysid::ssm::{Dataset, InitSpec, ModelSpec, Xi0Policy};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> hybrid_sysid::Result<()> {
    let (a, q, r, len): (f64, f64, f64, usize) = (0.8, 0.3, 0.2, 30);
    let mut rng = seeded(1);
    let mut x: f64 = rng.sample(StandardNormal);
    let mut ys = Vec::new();
    for _ in 0..len {
        ys.push(x + r.sqrt() * rng.sample::<f64, _>(StandardNormal));
        x = a * x + q.sqrt() * rng.sample::<f64, _>(StandardNormal);
    }

    // Kalman filter (skipping y_0, like the particle methods) and RTS smoother.
    let (mut mf, mut pf) = (vec![0.0], vec![1.0]);
    for y in &ys[1..] {
        let (mp, pp) = (a * mf.last().unwrap(), a * a * pf.last().unwrap() + q);
        let k = pp / (pp + r);
        mf.push(mp + k * (y - mp));
        pf.push((1.0 - k) * pp);
    }
    let mut ms = mf.clone();
    for t in (0..len - 1).rev() {
        let g = pf[t] * a / (a * a * pf[t] + q);
        ms[t] = mf[t] + g * (ms[t + 1] - a * mf[t]);
    }

    // `ξ` is learned alongside but does not enter the state, so the state
    // posterior is exactly the smoother's.
    let spec = ModelSpec::builder(1, 1, 1, 0)
        .transition(move |x, _, _| x * a)
        .measurement(|x, _| x.clone())
        .regressor(1, |x, _| x.clone())
        .process_noise(DMatrix::from_element(1, 1, q))
        .measurement_noise(DMatrix::from_element(1, 1, r))
        .init(InitSpec::new(DVector::zeros(1), DMatrix::identity(1, 1), Xi0Policy::PriorPredictive)?)
        .build()?;
    let prior = MniwParams::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1), DMatrix::from_element(1, 1, 0.5), 4.0)?;
    let data = Dataset::without_inputs(ys.iter().map(|&y| DVector::from_element(1, y)).collect());
    let cfg = PgasConfig {
        n_particles: 20,
        iterations: 1000,
        ..PgasConfig::default()
    };
    let mut sums = vec![0.0; len];
    pgas_run(&data, &spec, &prior, &cfg, None, &mut seeded(2), |s| {
        if s.k > 100 {
            for (t, x) in s.reference.xs.iter().enumerate() {
                sums[t] += x[0];
            }
        }
        Ok(())
    })?;
    println!("{:>3} {:>9} {:>9}", "t", "PGAS", "RTS");
    for t in (0..len).step_by(3) {
        println!("{t:>3} {:>9.4} {:>9.4}", sums[t] / 900.0, ms[t]);
    }
    Ok(())
}
