//! Learn `ξ = A φ + ε` from pairs with the MNIW conjugate update, then query
//! the Student-t predictive and draw parameters.

use hybrid_sysid::conjugate::{
    params_from_stats, predictive, sample_mniw, stats_from_params, MniwParams,
};
use hybrid_sysid::rng::seeded;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> hybrid_sysid::Result<()> {
    let truth = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 0.25, 0.0, 2.0, -1.0]);
    let noise_std = 0.1;
    let prior = MniwParams::noninformative(2, DMatrix::identity(3, 3) * 10.0, 0.01)?;
    let mut stats = stats_from_params(&prior)?;

    let mut rng = seeded(7);
    for _ in 0..200 {
        let phi = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let eps = DVector::from_fn(2, |_, _| noise_std * rng.sample::<f64, _>(StandardNormal));
        stats.observe(&phi, &(&truth * &phi + eps))?;
    }

    let post = params_from_stats(&stats)?;
    println!("posterior mean of A:{}", post.mean);
    println!("mean of Σε: {}", &post.scale / (post.dof - 3.0));

    let phi = DVector::from_vec(vec![0.5, 0.5, -0.5]);
    let t = predictive(&stats, &phi)?;
    println!("predictive at {:?}: mean {:?}, dof {:.0}", phi.as_slice(), t.mu.as_slice(), t.rho);
    if let Some(cov) = t.covariance() {
        println!("predictive covariance:{cov}");
    }

    let draw = sample_mniw(&post, &mut rng)?;
    println!("one posterior draw of A:{}", draw.weights);
    Ok(())
}
