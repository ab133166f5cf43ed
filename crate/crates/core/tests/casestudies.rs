use hybrid_sysid::casestudies::emps::{self, parse_emps, write_emps, EmpsConfig, EmpsRecord};
use hybrid_sysid::casestudies::oscillator::{self, oscillator_target, OscillatorConfig};
use hybrid_sysid::casestudies::vehicle::{self, VehicleConfig};
use hybrid_sysid::casestudies::linear::{self, LinearConfig};
use hybrid_sysid::rng::seeded;
use hybrid_sysid::ssm::rk4_step;
use hybrid_sysid::Error;
use nalgebra::DVector;

#[test]
fn oscillator_energy_dissipates() {
    let cfg = OscillatorConfig {
        steps: vec![],
        process_noise: [0.0, 0.0],
        measurement_noise: 0.0,
        x0: [3.0, -1.0],
        duration: 60.0,
        ..Default::default()
    };
    let sim = oscillator::simulate(&cfg, &mut seeded(1)).unwrap();
    let energy = |x: &DVector<f64>| 0.5 * cfg.m * x[1] * x[1] + 0.5 * cfg.c1 * x[0] * x[0] + 0.25 * cfg.c2 * x[0].powi(4);
    let e0 = energy(&sim.xs[0]);
    let et = energy(sim.xs.last().unwrap());
    assert!(et < 1e-3 * e0, "energy {e0} -> {et}");
    assert!(sim.xs.last().unwrap().norm() < sim.xs[0].norm());
}

#[test]
fn oscillator_interface_is_the_spring_damper_force() {
    let cfg = OscillatorConfig::default();
    let sim = oscillator::simulate(&cfg, &mut seeded(2)).unwrap();
    for (x, xi) in sim.xs.iter().zip(&sim.xis) {
        assert_eq!(xi[0], oscillator_target(x[0], x[1], &cfg));
    }
}

#[test]
fn vehicle_mirror_symmetry() {
    let cfg = VehicleConfig::default();
    let step = |x: &DVector<f64>, u: &DVector<f64>| {
        rk4_step(|x, u| cfg.dynamics(x, u, cfg.true_friction(x, u).unwrap()), x, u, cfg.dt).unwrap()
    };
    let mut x = DVector::zeros(2);
    let mut xm = DVector::zeros(2);
    for k in 0..500 {
        let delta = cfg.steering(k as f64 * cfg.dt);
        x = step(&x, &DVector::from_vec(vec![cfg.vx, delta]));
        xm = step(&xm, &DVector::from_vec(vec![cfg.vx, -delta]));
        assert!((&x + &xm).amax() < 1e-12 * x.amax().max(1.0));
    }
    assert!(x[1].abs() > 1e-3);
}

#[test]
fn vehicle_interface_is_the_friction() {
    let cfg = VehicleConfig::default();
    let sim = vehicle::simulate(&cfg, &mut seeded(3)).unwrap();
    for ((x, u), xi) in sim.xs.iter().zip(&sim.us).zip(&sim.xis) {
        let (f, r) = cfg.true_friction(x, u).unwrap();
        assert_eq!((xi[0], xi[1]), (f, r));
    }
}

#[test]
fn linear_interface_is_the_coupling() {
    let cfg = LinearConfig::default();
    let sim = linear::simulate(&cfg, &mut seeded(4)).unwrap();
    for (x, xi) in sim.xs.iter().zip(&sim.xis) {
        assert!((xi[0] - cfg.b * x[0]).abs() < 1e-15);
    }
}

#[test]
fn emps_csv_round_trip() {
    let (rec, _) = emps::synthesize(&EmpsConfig::default(), &mut seeded(5)).unwrap();
    let mut buf = Vec::new();
    write_emps(&rec, &mut buf).unwrap();
    let back = parse_emps(buf.as_slice()).unwrap();
    assert_eq!(back, rec);
}

#[test]
fn emps_csv_errors() {
    let bad_header = "time,s,tau\n0,0,0\n0.1,0,0\n";
    assert!(matches!(parse_emps(bad_header.as_bytes()), Err(Error::Format(_))));
    let bad_value = "t,s,tau\n0,0,0\n0.1,x,0\n";
    match parse_emps(bad_value.as_bytes()) {
        Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 2)),
        other => panic!("{other:?}"),
    }
    let uneven = "t,s,tau\n0,0,0\n0.1,0,0\n0.3,0,0\n";
    assert!(matches!(parse_emps(uneven.as_bytes()), Err(Error::Format(_))));
    assert!(matches!(parse_emps("t,s,tau\n0,0,0\n".as_bytes()), Err(Error::Format(_))));
}

#[test]
fn emps_decimation_keeps_every_kth_sample() {
    let rec = EmpsRecord {
        t: (0..10).map(|i| i as f64 * 0.1).collect(),
        s: (0..10).map(|i| i as f64).collect(),
        tau: vec![0.0; 10],
    };
    let d = rec.decimate(3).unwrap();
    assert_eq!(d.s, vec![0.0, 3.0, 6.0, 9.0]);
    assert!((d.dt() - 0.3).abs() < 1e-12);
}

#[test]
fn emps_forward_simulation_with_true_friction() {
    // Open-loop replay with the simulator's own friction reproduces the record
    // up to the injected process noise.
    let cfg = EmpsConfig::default();
    let (rec, _) = emps::synthesize(&cfg, &mut seeded(6)).unwrap();
    let syn = cfg.synthetic.clone();
    let sim = emps::forward_simulate(&rec, cfg.mass, |v| syn.friction_at(v));
    let rmse = emps::position_rmse(&rec, &sim);
    let span = rec.s.iter().cloned().fold(f64::MIN, f64::max) - rec.s.iter().cloned().fold(f64::MAX, f64::min);
    assert!(rmse < 0.05 * span, "rmse {rmse} over span {span}");
}
