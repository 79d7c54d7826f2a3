use lambdaset_core::first_order::SphereGrid;
use lambdaset_core::nonsmooth::*;
use lambdaset_core::scenarios::*;
use lambdaset_core::*;
use proptest::prelude::*;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_vec(x.to_vec())
}

fn zero_u() -> PiecewiseConstantControl {
    PiecewiseConstantControl::constant(v(&[0.0]), (0.0, 10.0))
}

#[test]
fn friction_hull_on_surface() {
    let sys = friction_system(1.0).unwrap();
    let f = filippov_set_eval(&sys, 0.0, &v(&[0.3, 0.0]), &MaxConfig::default()).unwrap();
    assert!(matches!(f, FilippovSet::Hull { .. }));
    assert_eq!(f.component_range(0), (0.0, 0.0));
    assert_eq!(f.component_range(1), (-2.0, 2.0));
    assert_eq!(f.support(&v(&[0.0, -1.0])), 2.0);
}

#[test]
fn friction_branch_off_surface() {
    let sys = friction_system(1.0).unwrap();
    let f = filippov_set_eval(&sys, 0.0, &v(&[0.0, 0.5]), &MaxConfig::default()).unwrap();
    match &f {
        FilippovSet::Branch { mode, .. } => assert_eq!(*mode, UPPER),
        _ => panic!("expected a single branch"),
    }
    assert_eq!(f.component_range(1), (-2.0, 0.0));
    let f = filippov_set_eval(&sys, 0.0, &v(&[0.0, -0.5]), &MaxConfig::default()).unwrap();
    assert_eq!(f.component_range(1), (0.0, 2.0));
}

#[test]
fn pulse_train_hits_checkpoints() {
    for delta in [0.05, 0.1] {
        let tr = simulate_pulse_train(delta, 1e-3).unwrap();
        for (t, x) in pulse_checkpoints(delta) {
            let got = tr.sample(t);
            assert!((got - &x).amax() < 1e-12, "delta {delta}, t {t}: {} vs {}", tr.sample(t), x);
        }
    }
}

#[test]
fn sliding_is_invariant() {
    let sys = friction_system(1.0).unwrap();
    let u = PiecewiseConstantControl::constant(v(&[0.4]), (0.0, 1.0));
    for sel in [FilippovSelection::Strict, FilippovSelection::LatchedPerArc] {
        let tr = simulate_filippov(&sys, &u, &v(&[0.3, 0.0]), (0.0, 1.0), &SimConfig::with_dt(1e-2), sel).unwrap();
        assert!(tr.states.iter().all(|x| x[1] == 0.0 && x[0] == 0.3));
        assert!(tr.modes.iter().all(|&m| m == SLIDING));
    }
}

#[test]
fn sliding_alpha_examples() {
    let sys = friction_system(1.0).unwrap();
    let x = v(&[0.0, 0.0]);
    assert!((sys.sliding_alpha(0.0, &x, &v(&[0.0])).unwrap() - 0.5).abs() < 1e-15);
    let f = sys.sliding_field(0.0, &x, &v(&[0.5])).unwrap();
    assert!(f.amax() < 1e-15);
    assert!(sys.surface.gradient_self_test(&[v(&[0.1, 0.2]), v(&[-1.0, 3.0])]) < 1e-6);
}

#[test]
fn single_mode_hybrid_matches_plain_integration() {
    let p = BouncingBallParams::default();
    let aut = bouncing_ball_automaton(&p, 0.05).unwrap();
    let u = PiecewiseConstantControl::constant(v(&[p.u_max]), (0.0, 0.05));
    let x0 = v(&[p.y0, p.v0]);
    let cfg = SimConfig::with_dt(1e-3);
    let h = simulate_hybrid(&aut, &SignalControl(&u), &x0, HARD, (0.0, 0.05), &cfg).unwrap();
    let plain = dynamics::simulate_control(&aut.system, HARD, &u, &x0, (0.0, 0.05), &cfg).unwrap();
    assert!(h.events.is_empty());
    assert_eq!(h.times.len(), plain.times.len());
    for (a, b) in h.states.iter().zip(&plain.states) {
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }
}

#[test]
fn free_fall_impact_on_soft_ground() {
    let p = BouncingBallParams::default();
    let aut = bouncing_ball_automaton(&p, 0.6).unwrap();
    let tr = simulate_hybrid(&aut, &SignalControl(&zero_u()), &v(&[1.0, 0.0]), SOFT, (0.0, 0.6), &SimConfig::with_dt(1e-3)).unwrap();
    let (t, rebound) = free_fall_impact(p.g, 1.0, p.e1);
    assert!((t - (2.0f64 / 9.8).sqrt()).abs() < 1e-15);
    assert!((rebound - 2.2136).abs() < 1e-4);
    let ev = &tr.events[0];
    assert_eq!(ev.kind, EventKind::Impact);
    assert!((ev.time - t).abs() < 1e-8, "impact {} vs {t}", ev.time);
    assert!((ev.payload.state_after[1] - rebound).abs() < 1e-7);
    assert_eq!(tr.times[ev.index], ev.time);
}

#[test]
fn mode_switch_time_is_exact() {
    // y = 1 − 6t + t²/2 reaches 0.5 at 6 − √35.
    let exact = 6.0 - 35f64.sqrt();
    for dt in [1e-2, 1e-3] {
        let run = simulate_bouncing_ball(&BouncingBallParams::default(), &SimConfig::with_dt(dt)).unwrap();
        let sw = &run.trajectory.events[0];
        assert_eq!((sw.payload.from_mode, sw.payload.to_mode), (HARD, SOFT));
        assert!((sw.time - exact).abs() < 1e-9, "dt {dt}: {} vs {exact}", sw.time);
    }
}

#[test]
fn bouncing_run_matches_hand_values() {
    let run = simulate_bouncing_ball(&BouncingBallParams::default(), &SimConfig::with_dt(1e-3)).unwrap();
    assert!((run.impact_time - 0.169048).abs() < 1e-6, "impact {}", run.impact_time);
    let imp = run.trajectory.events.iter().find(|e| e.kind == EventKind::Impact).unwrap();
    assert!((imp.payload.state_before[1] + 5.83095).abs() < 1e-5);
    assert!((imp.payload.state_after[1] - 2.91548).abs() < 1e-5);
    assert!((run.apex_time - 0.466546).abs() < 1e-6);
    let last = run.trajectory.states.last().unwrap();
    assert!(last[1].abs() < 1e-9);
}

#[test]
fn jump_formula_examples() {
    let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
    let spec = JumpSpec {
        index: 5,
        time: 0.5,
        edge: Some((SOFT, SOFT)),
        inv_jac_t: DMatrix::from_diagonal(&v(&[1.0, -2.0])),
        grad: v(&[1.0, 0.0]),
        condition_number: 2.0,
    };
    let flow = JumpAdjointFlow::new(&times, vec![spec.clone()], |_t, _k| Ok(DMatrix::zeros(2, 2))).unwrap();
    let st = flow.propagate(&v(&[0.7, 1.0]), &[0.0]).unwrap();
    assert_eq!(st.psi_minus[5], v(&[0.7, 1.0]));
    assert_eq!(st.state.psi[5], v(&[0.7, -2.0]));
    assert_eq!(st.state.psi[10], v(&[0.7, -2.0]));
    let st = flow.propagate(&v(&[0.7, 1.0]), &[3.0]).unwrap();
    assert!((&st.state.psi[5] - v(&[3.7, -2.0])).amax() < 1e-15);
    assert_eq!(st.records[0].formula_residual(), 0.0);
    assert_eq!(flow.residual(&st), 0.0);

    let mut id = spec;
    id.inv_jac_t = DMatrix::identity(2, 2);
    let flow = JumpAdjointFlow::new(&times, vec![id], |_t, _k| Ok(DMatrix::zeros(2, 2))).unwrap();
    assert_eq!(flow.propagate(&v(&[0.7, 1.0]), &[0.0]).unwrap().state.psi[5], v(&[0.7, 1.0]));
    assert!(flow.propagate(&v(&[0.7, 1.0]), &[]).is_err());
}

#[test]
fn jump_needs_its_own_sample() {
    let times = [0.0, 0.5, 1.0];
    let spec = JumpSpec { index: 0, time: 0.0, edge: None, inv_jac_t: DMatrix::identity(1, 1), grad: v(&[1.0]), condition_number: 1.0 };
    assert!(matches!(JumpAdjointFlow::new(&times, vec![spec], |_t, _k| Ok(DMatrix::zeros(1, 1))), Err(Error::Jump(_))));
}

#[test]
fn friction_constant_costate_is_rejected() {
    let r = friction_reference(&FrictionParams::default(), 1e-2).unwrap();
    let s = search_nonsmooth(&r, Sense::Minimize, &SphereGrid::degrees(2, 1.0).unwrap(), &[0.0], 1e-6).unwrap();
    assert!(s.min_violation >= 0.85, "min {}", s.min_violation);
    assert!(s.multipliers.is_empty());
}

#[test]
fn bouncing_reference_has_two_jumps() {
    let (r, run) = bouncing_ball_reference(&BouncingBallParams::default(), &SimConfig::with_dt(1e-3)).unwrap();
    assert_eq!(r.events().len(), 2);
    let impact = &r.events()[1];
    assert!((impact.inv_jac_t[(1, 1)] + 2.0).abs() < 1e-12);
    assert!(run.automaton.reset_condition_numbers(&run.trajectory).iter().all(|c| *c <= 2.0 + 1e-12));
    assert!((condition_number(&DMatrix::from_diagonal(&v(&[1.0, -0.5]))) - 2.0).abs() < 1e-12);
}

#[test]
fn bouncing_candidate_residuals() {
    let (r, run) = bouncing_ball_reference(&BouncingBallParams::default(), &SimConfig::with_dt(1e-3)).unwrap();
    let psi0 = bouncing_candidate_psi0(run.impact_time);
    let st = adjoint_with_jumps(&r, &psi0, &[0.0, 0.0]).unwrap();
    assert!(st.records.iter().all(|j| j.formula_residual() < 1e-12));
    let rep = check_nonsmooth_candidate(&r, &psi0, &[0.0, 0.0], Sense::Minimize, 1e-6).unwrap();
    assert!(rep.adjoint_residual < 1e-9);
    assert!(rep.jumps.as_ref().unwrap().jump_residuals.iter().all(|j| *j < 1e-12));
    assert_eq!(rep.verdict, Verdict::Reject);
}

#[test]
fn bouncing_search_gets_close() {
    let (r, _) = bouncing_ball_reference(&BouncingBallParams::default(), &SimConfig::with_dt(1e-2)).unwrap();
    let nus: Vec<f64> = (-10..=10).map(f64::from).collect();
    let s = search_nonsmooth(&r, Sense::Minimize, &SphereGrid::degrees(2, 1.0).unwrap(), &nus, 1e-6).unwrap();
    assert_eq!(s.multipliers.len(), 2);
    assert_eq!(s.evaluated, 360 * nus.len() * nus.len());
    assert!(s.min_violation < 1e-2, "min {}", s.min_violation);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jump_records_are_consistent(a in -3.0f64..3.0, b in -3.0f64..3.0, n1 in -5.0f64..5.0, n2 in -5.0f64..5.0) {
        let (r, _) = bouncing_ball_reference(&BouncingBallParams::default(), &SimConfig::with_dt(1e-2)).unwrap();
        let st = adjoint_with_jumps(&r, &v(&[a, b]), &[n1, n2]).unwrap();
        prop_assert_eq!(st.records.len(), 2);
        for rec in &st.records {
            prop_assert!(rec.formula_residual() < 1e-12 * (1.0 + rec.psi_after.amax()));
        }
    }

    #[test]
    fn off_surface_set_is_one_branch(x1 in -2.0f64..2.0, x2 in 0.01f64..2.0, s in prop::bool::ANY) {
        let sys = friction_system(1.0).unwrap();
        let x2 = if s { x2 } else { -x2 };
        let f = filippov_set_eval(&sys, 0.0, &v(&[x1, x2]), &MaxConfig::default()).unwrap();
        let is_branch = matches!(f, FilippovSet::Branch { .. });
        prop_assert!(is_branch);
        prop_assert_eq!(f.component_range(0), (x2, x2));
    }
}
