mod support;

use hybrid_sysid::ssm::{measurement_density, rk4_step, transition_density, ModelSpec};
use nalgebra::{DMatrix, DVector};
use support::simpson;

fn scalar() -> ModelSpec {
    ModelSpec::builder(1, 1, 1, 0)
        .transition(|x, xi, _| x * 0.9 + xi)
        .measurement(|x, _| x.map(|v| v.sin()))
        .regressor(1, |x, _| x.clone())
        .process_noise(DMatrix::from_element(1, 1, 0.3))
        .measurement_noise(DMatrix::from_element(1, 1, 0.05))
        .build()
        .unwrap()
}

fn v(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

#[test]
fn densities_integrate_to_one() {
    let spec = scalar();
    let u = DVector::zeros(0);
    let trans = simpson(
        &|x1| transition_density(&spec, &v(x1), &v(0.7), &v(-0.2), &u).unwrap().exp(),
        -10.0,
        10.0,
        1e-10,
    );
    assert!((trans - 1.0).abs() < 1e-6);
    let meas = simpson(&|y| measurement_density(&spec, &v(y), &v(1.1), &u).unwrap().exp(), -5.0, 5.0, 1e-10);
    assert!((meas - 1.0).abs() < 1e-6);
}

#[test]
fn rk4_matches_exponential() {
    let x = v(1.3);
    let out = rk4_step(|x, _| -x, &x, &DVector::zeros(0), 0.02).unwrap();
    assert!((out[0] - 1.3 * (-0.02f64).exp()).abs() < 1e-9);
}

#[test]
fn rk4_rotation_preserves_radius() {
    let f = |x: &DVector<f64>, _: &DVector<f64>| DVector::from_vec(vec![-x[1], x[0]]);
    let mut x = DVector::from_vec(vec![1.0, 0.0]);
    for _ in 0..1000 {
        x = rk4_step(f, &x, &DVector::zeros(0), 0.01).unwrap();
    }
    assert!((x.norm() - 1.0).abs() < 1e-9);
    assert!((x[0] - 10f64.cos()).abs() < 1e-8);
}
