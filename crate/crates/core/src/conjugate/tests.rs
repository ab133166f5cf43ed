use super::*;
use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};

fn scalar_params() -> MniwParams {
    MniwParams::new(
        DMatrix::from_element(1, 1, 2.0),
        DMatrix::from_element(1, 1, 4.0),
        DMatrix::from_element(1, 1, 3.0),
        5.0,
    )
    .unwrap()
}

#[test]
fn scalar_stats_substitution() {
    let s = stats_from_params(&scalar_params()).unwrap();
    assert_relative_eq!(s.chi0[(0, 0)], 0.5, epsilon = 1e-15);
    assert_relative_eq!(s.chi1[(0, 0)], 0.25, epsilon = 1e-15);
    assert_relative_eq!(s.chi2[(0, 0)], 4.0, epsilon = 1e-15);
    assert_eq!(s.chi3, 5.0);
    let p = params_from_stats(&s).unwrap();
    assert_relative_eq!(p.mean[(0, 0)], 2.0, epsilon = 1e-14);
    assert_relative_eq!(p.col_cov[(0, 0)], 4.0, epsilon = 1e-14);
    assert_relative_eq!(p.scale[(0, 0)], 3.0, epsilon = 1e-14);
}

#[test]
fn identity_prior_stats() {
    let (nx, np) = (2, 3);
    let p = MniwParams::noninformative(nx, DMatrix::identity(np, np), 1.0).unwrap();
    let s = stats_from_params(&p).unwrap();
    assert_eq!(s.chi0, DMatrix::zeros(np, nx));
    assert_eq!(s.chi1, DMatrix::identity(np, np));
    assert_eq!(s.chi2, DMatrix::identity(nx, nx));
    assert_eq!(s.chi3, (nx + np + 1) as f64);
}

#[test]
fn zero_pair_only_counts() {
    let p = MniwParams::noninformative(2, DMatrix::identity(3, 3), 1.0).unwrap();
    let s = stats_from_params(&p).unwrap();
    let u = posterior_update(&s, &DVector::zeros(3), &DVector::zeros(2)).unwrap();
    assert_eq!(u.chi0, s.chi0);
    assert_eq!(u.chi1, s.chi1);
    assert_eq!(u.chi2, s.chi2);
    assert_eq!(u.chi3, s.chi3 + 1.0);
}

#[test]
fn dimension_errors() {
    let s = SuffStats::zeros(2, 3);
    assert!(matches!(
        posterior_update(&s, &DVector::zeros(2), &DVector::zeros(2)),
        Err(Error::Dimension(_))
    ));
    assert!(matches!(
        trajectory_stats(2, 3, &[DVector::zeros(3)], &[]),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn forgetting_factor_domain() {
    let s = SuffStats::zeros(1, 1);
    for g in [0.0, -0.1, 1.01, f64::NAN] {
        assert!(matches!(forget(&s, g), Err(Error::InvalidForgettingFactor(_))));
    }
    let p = stats_from_params(&scalar_params()).unwrap();
    assert_eq!(forget(&p, 1.0).unwrap(), p);
}

#[test]
fn forgetting_halves_above_floor() {
    let mut s = stats_from_params(&scalar_params()).unwrap();
    s.chi3 = 100.0;
    let f = forget(&s, 0.5).unwrap();
    assert_eq!(f.chi0, &s.chi0 * 0.5);
    assert_eq!(f.chi1, &s.chi1 * 0.5);
    assert_eq!(f.chi2, &s.chi2 * 0.5);
    assert_eq!(f.chi3, 50.0);
    let f = forget(&f, 0.01).unwrap();
    assert_eq!(f.chi3, f.dof_floor());
}

#[test]
fn singular_and_degenerate() {
    let s = SuffStats::zeros(1, 2);
    assert!(matches!(params_from_stats(&s), Err(Error::SingularStatistics)));
    let mut s = SuffStats::zeros(1, 1);
    s.chi1[(0, 0)] = 1.0;
    s.chi0[(0, 0)] = 2.0;
    s.chi2[(0, 0)] = 4.0; // Ψ = 4 − 4 = 0
    s.chi3 = 5.0;
    assert!(matches!(params_from_stats(&s), Err(Error::DegeneratePosterior(_))));
}

#[test]
fn predictive_zero_variance_limit() {
    let p = MniwParams::new(
        DMatrix::from_row_slice(1, 2, &[1.0, -2.0]),
        DMatrix::identity(2, 2) * 1e-16,
        DMatrix::from_element(1, 1, 2.0),
        6.0,
    )
    .unwrap();
    let phi = DVector::from_vec(vec![0.3, 0.7]);
    let t = predictive_from_params(&p, &phi).unwrap();
    assert_relative_eq!(t.rho, 6.0, epsilon = 1e-12);
    assert_relative_eq!(t.lambda[(0, 0)], 2.0 / 6.0, max_relative = 1e-6);
    assert_relative_eq!(t.mu[0], 0.3 - 1.4, max_relative = 1e-12);

    // Through the statistics the limit is only representable with a zero mean.
    let mut p0 = p.clone();
    p0.mean.fill(0.0);
    let t = predictive(&stats_from_params(&p0).unwrap(), &phi).unwrap();
    assert_relative_eq!(t.lambda[(0, 0)], 2.0 / 6.0, max_relative = 1e-6);
}

#[test]
fn factored_matches_plain() {
    let p = MniwParams::new(
        DMatrix::from_row_slice(2, 3, &[0.1, 0.2, -0.3, 0.5, 0.0, 1.0]),
        DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 0.5]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
        7.0,
    )
    .unwrap();
    let mut s = stats_from_params(&p).unwrap();
    let mut f = FactoredPosterior::from_params(&p).unwrap();
    let pairs: Vec<(DVector<f64>, DVector<f64>)> = (0..10)
        .map(|k| {
            let x = k as f64 * 0.37;
            (
                DVector::from_vec(vec![x.sin(), x.cos(), 1.0]),
                DVector::from_vec(vec![x, -0.5 * x]),
            )
        })
        .collect();
    for (phi, xi) in &pairs {
        s.observe(phi, xi).unwrap();
        f.observe(phi, xi).unwrap();
    }
    f.forget(0.9).unwrap();
    s.forget_in_place(0.9).unwrap();
    f.exchange((&pairs[0].0, &pairs[1].1), (&pairs[3].0, &pairs[3].1)).unwrap();
    s.observe(&pairs[0].0, &pairs[1].1).unwrap();
    s.retract(&pairs[3].0, &pairs[3].1).unwrap();

    let phi = DVector::from_vec(vec![0.2, -0.4, 1.0]);
    let a = predictive(&s, &phi).unwrap();
    let b = f.predictive(&phi).unwrap();
    assert_relative_eq!(a.mu, b.mu, max_relative = 1e-10);
    assert_relative_eq!(a.lambda, b.lambda, max_relative = 1e-10);
    assert_relative_eq!(log_normalizer(&s).unwrap(), f.log_normalizer(), max_relative = 1e-10);
    let xi = DVector::from_vec(vec![0.1, 0.2]);
    assert_relative_eq!(
        a.log_pdf(&xi).unwrap(),
        f.predictive_log_pdf(&phi, &xi).unwrap(),
        max_relative = 1e-10
    );
}

#[test]
fn seeded_draws_repeat() {
    let p = scalar_params();
    let a = sample_mniw(&p, &mut crate::rng::seeded(3)).unwrap();
    let b = sample_mniw(&p, &mut crate::rng::seeded(3)).unwrap();
    assert_eq!(a, b);
    let t = predictive(&stats_from_params(&p).unwrap(), &DVector::from_element(1, 1.0)).unwrap();
    let x = sample_student_t(&t, &mut crate::rng::seeded(9)).unwrap();
    let y = sample_student_t(&t, &mut crate::rng::seeded(9)).unwrap();
    assert_eq!(x, y);
}
