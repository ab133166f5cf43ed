//! A user-defined hybrid model: a pendulum whose friction torque is unknown.
//! A sinusoidal drive torque keeps it moving. Only the angle is measured; the
//! friction curve is learned online.

use hybrid_sysid::basis::{eval_basis, state_features, BasisExpansion, HilbertBasisConfig, KernelSpec};
use hybrid_sysid::conjugate::MniwParams;
use hybrid_sysid::online::{average_stats, run_filter, OnlineConfig};
use hybrid_sysid::rng::seeded;
use hybrid_sysid::ssm::{rk4_unchecked, Dataset, InitSpec, ModelSpec, Xi0Policy};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const DT: f64 = 0.02;
const G_OVER_L: f64 = 9.81;

fn friction(w: f64) -> f64 {
    0.5 * w + 1.5 * (3.0 * w).tanh()
}

fn pendulum(x: &DVector<f64>, drive: f64, friction: f64) -> DVector<f64> {
    DVector::from_vec(vec![x[1], -G_OVER_L * x[0].sin() + drive - friction])
}

fn main() -> hybrid_sysid::Result<()> {
    // Simulate.
    let mut rng = seeded(4);
    let mut x = DVector::from_vec(vec![2.5, 0.0]);
    let (mut ys, mut us) = (Vec::new(), Vec::new());
    for t in 0..1500 {
        let u = DVector::from_element(1, 6.0 * (1.7 * t as f64 * DT).sin());
        ys.push(DVector::from_element(1, x[0] + 0.01 * rng.sample::<f64, _>(StandardNormal)));
        x = rk4_unchecked(|x, u| pendulum(x, u[0], friction(x[1])), &x, &u, DT);
        us.push(u);
    }

    // Friction is a function of the angular velocity, the second state.
    let basis = HilbertBasisConfig::one_dim(8.0, 16)?;
    let kernel = KernelSpec::squared_exponential(10.0, vec![1.0])?;
    // Wide inverse-Wishart with ν = n_ξ so early draws of the torque explore.
    let mut prior = MniwParams::noninformative(1, hybrid_sysid::basis::prior_column_covariance(&basis, &kernel)?, 40.0)?;
    prior.dof = 1.0;
    let spec = ModelSpec::builder(2, 1, 1, 1)
        .transition(|x, xi, u| rk4_unchecked(|x, u| pendulum(x, u[0], xi[0]), x, u, DT))
        .measurement(|x, _| DVector::from_element(1, x[0]))
        .basis(BasisExpansion::new(basis.clone(), state_features(vec![1])))
        .process_noise(DMatrix::from_diagonal(&DVector::from_vec(vec![1e-6, 1e-4])))
        .measurement_noise(DMatrix::from_element(1, 1, 1e-4))
        .init(InitSpec::new(DVector::from_vec(vec![2.5, 0.0]), DMatrix::identity(2, 2) * 1e-6, Xi0Policy::PriorPredictive)?)
        .build()?;

    let cfg = OnlineConfig {
        n_particles: 300,
        gamma: 1.0,
        ..OnlineConfig::default()
    };
    let out = run_filter(&spec, &prior, &Dataset::new(ys, us)?, &cfg, false, &mut seeded(5), |_| Ok(()))?;
    let post = hybrid_sysid::conjugate::params_from_stats(&average_stats(&out.ensemble)?)?;
    println!("{:>6} {:>9} {:>9}", "ω", "learned", "true");
    // The drive keeps |ω| below about 2.5; outside that the prior dominates.
    for w in [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0] {
        let learned = (&post.mean * eval_basis(&basis, &[w]))[0];
        println!("{w:>6.1} {learned:>9.3} {:>9.3}", friction(w));
    }
    Ok(())
}
