use lambdaset_core::dynamics::{averaged_jacobian, simulate_control, FnControl};
use lambdaset_core::linalg::{jacobi_eigenvalues, max_eigenvalue, symmetry_defect};
use lambdaset_core::scenarios::{
    bouncing_ball_automaton, closed_form, four_atom_control, friction_system, nonholonomic_system, simulate_oscillation,
    sliding_control, BouncingBallParams, HARD,
};
use lambdaset_core::*;
use proptest::prelude::*;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_vec(x.to_vec())
}

fn decay_error(dt: f64) -> f64 {
    let tr = integrate_ode(|_t, x: &DVector<f64>| x.clone(), &v(&[1.0]), (0.0, 1.0), &SimConfig::with_dt(dt)).unwrap();
    (tr.final_state().unwrap()[0] - std::f64::consts::E).abs()
}

#[test]
fn vector_field_examples() {
    let nh = nonholonomic_system(1.0).unwrap();
    assert_eq!(eval_vector_field(&nh, 0, 0.0, &v(&[0.0, 0.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), v(&[1.0, 0.0, 0.5]));

    let fr = friction_system(1.0).unwrap();
    let lower = lambdaset_core::nonsmooth::LOWER;
    assert_eq!(eval_vector_field(&fr.base, lower, 0.0, &v(&[0.0, -1.0]), &v(&[0.0])).unwrap(), v(&[-1.0, 1.0]));

    let p = BouncingBallParams::default();
    let ball = bouncing_ball_automaton(&p, 1.0).unwrap();
    let f = eval_vector_field(&ball.system, HARD, 0.0, &v(&[1.0, 0.0]), &v(&[p.u_max])).unwrap();
    assert_eq!(f, v(&[0.0, p.u_max - p.g]));
}

#[test]
fn vector_field_rejects_bad_inputs() {
    let nh = nonholonomic_system(1.0).unwrap();
    assert!(matches!(eval_vector_field(&nh, 0, 0.0, &v(&[0.0, 0.0]), &v(&[1.0, 0.0])), Err(Error::Config(_))));
    assert!(matches!(eval_vector_field(&nh, 0, 0.0, &v(&[0.0; 3]), &v(&[0.5, 0.0])), Err(Error::Domain(_))));
    assert!(matches!(eval_vector_field(&nh, 3, 0.0, &v(&[0.0; 3]), &v(&[1.0, 0.0])), Err(Error::Config(_))));
}

#[test]
fn convexified_drift_examples() {
    let nh = nonholonomic_system(1.0).unwrap();
    let mu = four_atom_control((0.0, 1.0)).unwrap();
    // Each atom contributes ½ to the third component; the averaged drift is (0, 0, ½).
    let d = eval_convexified_drift(&nh, 0, &mu, 0.3, &v(&[0.0, 0.0, 0.0])).unwrap();
    assert!((d - v(&[0.0, 0.0, 0.5])).amax() < 1e-15);

    let fr = friction_system(1.0).unwrap();
    let surf = fr.surface_system().unwrap();
    let d = eval_convexified_drift(&surf, 0, &sliding_control((0.0, 1.0)).unwrap(), 0.5, &v(&[0.0, 0.0])).unwrap();
    assert!(d.amax() < 1e-15);

    assert!(matches!(eval_convexified_drift(&nh, 0, &mu, 2.0, &v(&[0.0; 3])), Err(Error::Domain(_))));
}

#[test]
fn nonholonomic_averaged_jacobian_vanishes_on_reference() {
    let nh = nonholonomic_system(1.0).unwrap();
    let mu = four_atom_control((0.0, 1.0)).unwrap();
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        assert!(averaged_jacobian(&nh, 0, &mu, t, &v(&[0.0, 0.0, t])).unwrap().amax() < 1e-15);
    }
}

#[test]
fn exponential_decay_endpoint() {
    let tr = integrate_ode(|_t, x: &DVector<f64>| -x, &v(&[1.0]), (0.0, 1.0), &SimConfig::with_dt(1e-4)).unwrap();
    assert_eq!(*tr.times.last().unwrap(), 1.0);
    assert!((tr.final_state().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-8);
}

#[test]
fn rk4_halving_ratio() {
    for dt in [1e-2, 5e-3, 2.5e-3] {
        let r = decay_error(dt) / decay_error(dt / 2.0);
        assert!((14.0..=18.0).contains(&r), "dt {dt}: ratio {r}");
    }
}

#[test]
fn integrator_blow_up_is_reported() {
    let err = integrate_ode(|_t, x: &DVector<f64>| x.map(|a| a * a), &v(&[1.0]), (0.0, 2.0), &SimConfig::with_dt(1e-2)).unwrap_err();
    match err {
        Error::Integration { time, .. } => assert!(time > 0.9 && time <= 2.0, "time {time}"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn integrate_rejects_bad_config() {
    let f = |_t: f64, x: &DVector<f64>| x.clone();
    assert!(integrate_ode(f, &v(&[1.0]), (1.0, 0.0), &SimConfig::default()).is_err());
    let cfg = SimConfig { dt: -1.0, ..SimConfig::default() };
    assert!(matches!(integrate_ode(f, &v(&[1.0]), (0.0, 1.0), &cfg), Err(Error::Config(_))));
    let cfg = SimConfig { event_tol: 1.0, ..SimConfig::default() };
    assert!(matches!(integrate_ode(f, &v(&[1.0]), (0.0, 1.0), &cfg), Err(Error::Config(_))));
}

#[test]
fn oscillation_matches_closed_form() {
    let nh = nonholonomic_system(1.0).unwrap();
    let u = FnControl(|t: f64| v(&[(2.0 * t).cos(), (2.0 * t).sin()]));
    let tr = simulate_control(&nh, 0, &u, &v(&[0.0; 3]), (0.0, 1.0), &SimConfig::with_dt(1e-3)).unwrap();
    assert!((tr.final_state().unwrap()[0] - 0.5 * 2f64.sin()).abs() < 1e-6);

    let tr = simulate_oscillation(0.1, 0.2, 1.0, 1e-3).unwrap();
    let gap = tr.times.iter().zip(&tr.states).map(|(&t, x)| (x - closed_form(0.1, 0.2, t)).amax()).fold(0.0, f64::max);
    assert!(gap < 1e-6, "gap {gap}");
}

#[test]
fn hamiltonian_examples() {
    let nh = nonholonomic_system(1.0).unwrap();
    let h = hamiltonian_eval(&nh, 0, 0.0, &v(&[0.0; 3]), &v(&[0.0, 0.0, -1.0]), &v(&[1.0, 0.0])).unwrap();
    assert_eq!(h, -0.5);

    let ball = bouncing_ball_automaton(&BouncingBallParams::default(), 1.0).unwrap();
    let h = hamiltonian_eval(&ball.system, HARD, 0.0, &v(&[2.0, -3.0]), &v(&[1.0, 1.0]), &v(&[0.0])).unwrap();
    assert!((h + 12.8).abs() < 1e-12);

    assert_eq!(hamiltonian_eval(&nh, 0, 0.4, &v(&[1.0, 2.0, 3.0]), &v(&[0.0; 3]), &v(&[0.6, 0.8])).unwrap(), 0.0);
}

#[test]
fn hamiltonian_max_examples() {
    let nh = nonholonomic_system(1.0).unwrap();
    let cfg = MaxConfig::default();
    for s in [-2.0, 0.0, 3.0] {
        let (m, u) = hamiltonian_max(&nh, 0, 0.0, &v(&[0.0; 3]), &v(&[3.0, 4.0, s]), &cfg).unwrap();
        assert!((m - (5.0 + s / 2.0)).abs() < 1e-12);
        assert!((u - v(&[0.6, 0.8])).amax() < 1e-12);
        // Dense circle grid agrees with the closed form.
        let grid_best = (0..3600)
            .map(|k| {
                let a = k as f64 * std::f64::consts::TAU / 3600.0;
                hamiltonian_eval(&nh, 0, 0.0, &v(&[0.0; 3]), &v(&[3.0, 4.0, s]), &v(&[a.cos(), a.sin()])).unwrap()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(m >= grid_best && m - grid_best < 1e-5);
    }

    let p = BouncingBallParams::default();
    let ball = bouncing_ball_automaton(&p, 1.0).unwrap();
    let (_, u) = hamiltonian_max(&ball.system, HARD, 0.0, &v(&[1.0, -1.0]), &v(&[0.3, 0.7]), &cfg).unwrap();
    assert_eq!(u[0], p.u_max);
    let (_, u) = hamiltonian_max(&ball.system, HARD, 0.0, &v(&[1.0, -1.0]), &v(&[0.3, -0.7]), &cfg).unwrap();
    assert_eq!(u[0], 0.0);

    let pts = vec![v(&[1.0]), v(&[-1.0]), v(&[0.0])];
    let fin = ControlSystem::new(
        1,
        vec![ModeDynamics::new("f", ControlSetSpec::finite(pts).unwrap(), |_t, _x, u: &DVector<f64>| u.clone(), |_t, _x, _u| DMatrix::zeros(1, 1))],
        (0.0, 1.0),
    )
    .unwrap();
    let (m, u) = hamiltonian_max(&fin, 0, 0.0, &v(&[0.0]), &v(&[0.0]), &cfg).unwrap();
    assert_eq!((m, u), (0.0, v(&[-1.0])));
}

#[test]
fn grid_fallback_can_be_disabled() {
    let sys = ControlSystem::new(
        1,
        vec![ModeDynamics::new(
            "quad",
            ControlSetSpec::interval(-1.0, 1.0).unwrap(),
            |_t, _x, u: &DVector<f64>| v(&[u[0] * u[0]]),
            |_t, _x, _u| DMatrix::zeros(1, 1),
        )],
        (0.0, 1.0),
    )
    .unwrap();
    let cfg = MaxConfig { grid_fallback: false, ..MaxConfig::default() };
    assert!(matches!(hamiltonian_max(&sys, 0, 0.0, &v(&[0.0]), &v(&[1.0]), &cfg), Err(Error::Capability(_))));
    let (m, u) = hamiltonian_max(&sys, 0, 0.0, &v(&[0.0]), &v(&[1.0]), &MaxConfig::default()).unwrap();
    assert_eq!((m, u), (1.0, v(&[-1.0])));
}

#[test]
fn chatter_examples() {
    let set = ControlSetSpec::interval(-1.0, 1.0).unwrap();
    let single = GeneralizedControl::dirac(v(&[0.25]), &set, (0.0, 1.0)).unwrap();
    let c = chatter_approximate(&single, 0.1).unwrap();
    assert!(c.values.iter().all(|u| *u == v(&[0.25])));

    let half = sliding_control((0.0, 1.0)).unwrap();
    let c = chatter_approximate(&half, 0.1).unwrap();
    for w in c.breaks.windows(2) {
        assert!((w[1] - w[0] - 0.05).abs() < 1e-12);
    }
    assert_eq!(c.values[0], v(&[-1.0]));
    assert_eq!(c.values[1], v(&[1.0]));
    assert!(chatter_approximate(&half, 0.3).is_err());
}

#[test]
fn chattered_nonholonomic_endpoint_is_close() {
    let nh = nonholonomic_system(1.0).unwrap();
    let mu = four_atom_control((0.0, 1.0)).unwrap();
    let c = chatter_approximate(&mu, 1e-3).unwrap();
    let tr = simulate_control(&nh, 0, &c, &v(&[0.0; 3]), (0.0, 1.0), &SimConfig::with_dt(1e-3)).unwrap();
    let relaxed = integrate_ode(
        |t, x: &DVector<f64>| eval_convexified_drift(&nh, 0, &mu, t, x).unwrap(),
        &v(&[0.0; 3]),
        (0.0, 1.0),
        &SimConfig::with_dt(1e-3),
    )
    .unwrap();
    let d = (tr.final_state().unwrap() - relaxed.final_state().unwrap()).norm();
    assert!(d <= 5e-3, "chattered endpoint off by {d}");
}

#[test]
fn distance_examples() {
    let times: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let a = Trajectory::from_samples(times.clone(), times.iter().map(|&t| v(&[t])).collect()).unwrap();
    let b = Trajectory::from_samples(times.clone(), vec![v(&[0.0]); times.len()]).unwrap();
    assert!((trajectory_distance(&a, &b, DistanceNorm::C0).unwrap() - 1.0).abs() < 1e-12);
    assert!((trajectory_distance(&a, &b, DistanceNorm::C1).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(trajectory_distance(&a, &a, DistanceNorm::C1).unwrap(), 0.0);

    let c = Trajectory::from_samples(times.clone(), times.iter().map(|&t| v(&[t, t])).collect()).unwrap();
    assert!(matches!(trajectory_distance(&a, &c, DistanceNorm::C0), Err(Error::Config(_))));
}

#[test]
fn oscillation_distance_measured() {
    // ωt/ε = 2t stays below π on [0, 0.99], so the x₂ amplitude 2ε/ω = 1 is
    // never reached; the oracle is the closed form sampled on the grid.
    let tr = simulate_oscillation(0.1, 0.2, 0.99, 1e-3).unwrap();
    let xr = Trajectory::from_samples(tr.times.clone(), tr.times.iter().map(|&t| v(&[0.0, 0.0, t])).collect()).unwrap();
    let c0 = trajectory_distance(&tr, &xr, DistanceNorm::C0).unwrap();
    let oracle = tr
        .times
        .iter()
        .map(|&t| (closed_form(0.1, 0.2, t) - v(&[0.0, 0.0, t])).norm())
        .fold(0.0, f64::max);
    assert!((c0 - oracle).abs() < 1e-6, "C0 {c0} vs closed form {oracle}");
}

#[test]
fn trajectories_are_deterministic() {
    let nh = nonholonomic_system(1.0).unwrap();
    let u = FnControl(|t: f64| v(&[(3.0 * t).cos(), (3.0 * t).sin()]));
    let a = simulate_control(&nh, 0, &u, &v(&[0.1, 0.2, 0.3]), (0.0, 1.0), &SimConfig::with_dt(1e-3)).unwrap();
    let b = simulate_control(&nh, 0, &u, &v(&[0.1, 0.2, 0.3]), (0.0, 1.0), &SimConfig::with_dt(1e-3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn builtin_derivatives_pass_self_test() {
    nonholonomic_system(1.0).unwrap().derivative_self_test(50, 1, 1e-5).unwrap();
    friction_system(1.0).unwrap().base.derivative_self_test(50, 2, 1e-5).unwrap();
    bouncing_ball_automaton(&BouncingBallParams::default(), 1.0).unwrap().system.derivative_self_test(50, 3, 1e-5).unwrap();
}

#[test]
fn generalized_control_invariants() {
    let set = ControlSetSpec::interval(-1.0, 1.0).unwrap();
    let a = |u: f64, w: f64| Atom::new(v(&[u]), w);
    assert!(GeneralizedControl::constant(vec![a(-1.0, 0.5), a(1.0, 0.4)], &set, (0.0, 1.0)).is_err());
    assert!(GeneralizedControl::constant(vec![a(-1.0, 1.5), a(1.0, -0.5)], &set, (0.0, 1.0)).is_err());
    assert!(GeneralizedControl::constant(vec![a(2.0, 1.0)], &set, (0.0, 1.0)).is_err());
    assert!(ControlSetSpec::interval(1.0, 0.0).is_err());
    assert!(ControlSetSpec::sphere(2, 0.0).is_err());
    assert!(ControlSetSpec::finite(vec![]).is_err());
}

#[test]
fn jacobi_matches_cubic_roots() {
    // Characteristic polynomial roots of a symmetric 3×3 by the trigonometric formula.
    let cubic = |a: &DMatrix<f64>| -> Vec<f64> {
        let q = a.trace() / 3.0;
        let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let p2 = (0..3).map(|i| (a[(i, i)] - q).powi(2)).sum::<f64>() + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        if p == 0.0 {
            return vec![q; 3];
        }
        let b = (a - DMatrix::identity(3, 3) * q) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let mut e = vec![e1, 3.0 * q - e1 - e3, e3];
        e.sort_by(f64::total_cmp);
        e
    };
    let mut seed = 7u64;
    let mut next = || {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (seed >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
    };
    for _ in 0..200 {
        let m = DMatrix::from_fn(3, 3, |_, _| next());
        let s = (&m + m.transpose()) * 0.5;
        let e = jacobi_eigenvalues(&s).unwrap();
        for (a, b) in e.iter().zip(cubic(&s)) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert_eq!(max_eigenvalue(&s).unwrap(), e[2]);
    }
    let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    assert!(symmetry_defect(&asym) == 1.0);
    assert!(matches!(jacobi_eigenvalues(&asym), Err(Error::Invariant(_))));
}

fn unit_psi() -> impl Strategy<Value = DVector<f64>> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_filter("nonzero", |(a, b, c)| a * a + b * b + c * c > 1e-6).prop_map(|(a, b, c)| v(&[a, b, c]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn hamiltonian_max_dominates_samples(psi in unit_psi(), x in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), angle in 0.0f64..std::f64::consts::TAU) {
        let nh = nonholonomic_system(1.0).unwrap();
        let x = v(&[x.0, x.1, x.2]);
        let (m, _) = hamiltonian_max(&nh, 0, 0.5, &x, &psi, &MaxConfig::default()).unwrap();
        let h = hamiltonian_eval(&nh, 0, 0.5, &x, &psi, &v(&[angle.cos(), angle.sin()])).unwrap();
        prop_assert!(h <= m + 1e-9);
    }

    #[test]
    fn argmax_is_scale_invariant(psi in unit_psi(), c in 0.01f64..100.0, x in (-2.0f64..2.0, -2.0f64..2.0)) {
        let nh = nonholonomic_system(1.0).unwrap();
        let x = v(&[x.0, x.1, 0.0]);
        let cfg = MaxConfig::default();
        let (_, u1) = hamiltonian_max(&nh, 0, 0.0, &x, &psi, &cfg).unwrap();
        let (_, u2) = hamiltonian_max(&nh, 0, 0.0, &x, &(&psi * c), &cfg).unwrap();
        prop_assert!((u1 - u2).amax() < 1e-12);
    }

    #[test]
    fn single_atom_drift_equals_field(t in 0.0f64..1.0, x in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), angle in 0.0f64..std::f64::consts::TAU) {
        let nh = nonholonomic_system(1.0).unwrap();
        let set = ControlSetSpec::sphere(2, 1.0).unwrap();
        let u = v(&[angle.cos(), angle.sin()]);
        let mu = GeneralizedControl::dirac(u.clone(), &set, (0.0, 1.0)).unwrap();
        let x = v(&[x.0, x.1, x.2]);
        prop_assert_eq!(eval_convexified_drift(&nh, 0, &mu, t, &x).unwrap(), eval_vector_field(&nh, 0, t, &x, &u).unwrap());
    }

    #[test]
    fn bounded_set_projection_is_member(u in -5.0f64..5.0, w in -5.0f64..5.0) {
        let b = ControlSetSpec::boxed(v(&[-1.0, 0.0]), v(&[1.0, 2.0])).unwrap();
        prop_assert!(b.contains(&b.project(&v(&[u, w]))));
        let s = ControlSetSpec::sphere(2, 1.0).unwrap();
        prop_assert!(s.contains(&s.project(&v(&[u, w]))));
    }
}
