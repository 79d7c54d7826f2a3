use lambdaset_core::dynamics::simulate_control;
use lambdaset_core::first_order::*;
use lambdaset_core::scenarios::{
    bouncing_ball_automaton, friction_reference, nonholonomic_reference, BouncingBallParams, FrictionParams, ReferenceVariant, HARD,
};
use lambdaset_core::*;
use proptest::prelude::*;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_vec(x.to_vec())
}

fn nonholonomic() -> RelaxedReference {
    nonholonomic_reference(ReferenceVariant::Nominal, 1.0, 1e-2, AdmissibilityPolicy::Report).unwrap()
}

fn check(r: &RelaxedReference, psi0: &[f64]) -> CertificateReport {
    r.check(&FirstOrderCandidate::new(v(psi0), Sense::Minimize).unwrap(), 1e-6).unwrap()
}

/// Thrust arc of the ball in the hard mode, before it reaches the soft layer.
fn thrust_arc() -> RelaxedReference {
    let p = BouncingBallParams::default();
    let aut = bouncing_ball_automaton(&p, 0.05).unwrap();
    let set = aut.system.modes[HARD].control_set.clone();
    let u = PiecewiseConstantControl::constant(v(&[p.u_max]), (0.0, 0.05));
    let tr = simulate_control(&aut.system, HARD, &u, &v(&[p.y0, p.v0]), (0.0, 0.05), &SimConfig::with_dt(1e-3)).unwrap();
    let mu = GeneralizedControl::dirac(v(&[p.u_max]), &set, (0.0, 0.05)).unwrap();
    RelaxedReference::new(aut.system, HARD, tr, mu, AdmissibilityPolicy::default()).unwrap()
}

#[test]
fn nonholonomic_costate_is_constant() {
    let r = nonholonomic();
    let st = r.propagate_adjoint(&v(&[-1.0, 0.0, -2.0])).unwrap();
    assert_eq!(st.psi.len(), r.trajectory.len());
    assert!((st.psi.last().unwrap() - v(&[-1.0, 0.0, -2.0])).amax() < 1e-15);
}

#[test]
fn ball_costate_is_affine() {
    let r = thrust_arc();
    let st = r.propagate_adjoint(&v(&[1.0, 0.7])).unwrap();
    for (t, p) in st.times.iter().zip(&st.psi) {
        assert!((p - v(&[1.0, 0.7 - t])).amax() < 1e-12);
    }
}

#[test]
fn max_function_examples() {
    let r = nonholonomic();
    assert!((r.max_function(0, &v(&[0.0, 0.0, -1.0])).unwrap().0 + 0.5).abs() < 1e-12);
    assert!((r.max_function(0, &v(&[3.0, 4.0, 0.0])).unwrap().0 - 5.0).abs() < 1e-12);
    assert_eq!(r.max_function(0, &v(&[0.0; 3])).unwrap().0, 0.0);
}

#[test]
fn residual_oracle_vertical_costate() {
    let rep = check(&nonholonomic(), &[0.0, 0.0, -1.0]);
    assert!(rep.adjoint_residual.abs() < 1e-12);
    assert!((rep.max_gap - 0.5).abs() < 1e-12);
    assert!(rep.transversality_excess.abs() < 1e-12);
    assert!((rep.violation - 0.5).abs() < 1e-12);
    assert_eq!(rep.verdict, Verdict::Reject);
}

#[test]
fn slanted_costate_has_gap_two() {
    // ⟨ψ, ẋ̂⟩ = −2 against M = ‖(−1, 0)‖ − 1 = 0.
    let rep = check(&nonholonomic(), &[-1.0, 0.0, -2.0]);
    let scale = 5f64.sqrt();
    assert!((rep.max_gap * scale - 2.0).abs() < 1e-12, "gap {}", rep.max_gap * scale);
    assert_eq!(rep.verdict, Verdict::Reject);
}

#[test]
fn zero_costate_is_trivial() {
    let rep = check(&nonholonomic(), &[0.0, 0.0, 0.0]);
    assert_eq!(rep.nontriviality_slack, 1.0);
    assert_eq!(rep.verdict, Verdict::Reject);
}

#[test]
fn thrust_arc_has_zero_gap() {
    let r = thrust_arc();
    let rep = r.check(&FirstOrderCandidate::new(v(&[1.0, 1.0]), Sense::Minimize).unwrap(), 1e-9).unwrap();
    assert!(rep.max_gap < 1e-12, "gap {}", rep.max_gap);
    assert!(rep.adjoint_residual < 1e-12);
}

#[test]
fn inadmissible_reference_is_refused() {
    let err = nonholonomic_reference(ReferenceVariant::Nominal, 1.0, 1e-2, AdmissibilityPolicy::Enforce { tol: 1e-6 }).unwrap_err();
    match err {
        Error::Precondition { defect, .. } => assert!((defect - 0.5).abs() < 1e-12),
        e => panic!("unexpected {e}"),
    }
    let r = nonholonomic_reference(ReferenceVariant::Relaxed, 1.0, 1e-2, AdmissibilityPolicy::default()).unwrap();
    assert!(r.admissibility_defect().0 < 1e-12);
}

#[test]
fn nonholonomic_search_floor() {
    let r = nonholonomic();
    let s = search_first_order(&r, Sense::Minimize, &SphereGrid::degrees(3, 1.0).unwrap(), 1e-6).unwrap();
    assert!((s.min_violation - 0.5).abs() <= 0.02, "min {}", s.min_violation);
    assert!(s.argmin[2].abs() > 0.99, "argmin {:?}", s.argmin.as_slice());
}

#[test]
fn friction_constant_costate_floor() {
    let r = friction_reference(&FrictionParams::default(), 1e-2).unwrap();
    let s = search_first_order(&r, Sense::Minimize, &SphereGrid::degrees(2, 1.0).unwrap(), 1e-6).unwrap();
    assert!((s.min_violation - 2.0 / 5f64.sqrt()).abs() <= 0.02, "min {}", s.min_violation);
}

#[test]
fn refinement_does_not_raise_minimum() {
    let r = nonholonomic();
    let coarse = search_first_order(&r, Sense::Minimize, &SphereGrid::new(3, 12), 1e-6).unwrap();
    let fine = search_first_order(&r, Sense::Minimize, &SphereGrid::new(3, 36), 1e-6).unwrap();
    assert!(fine.min_violation <= coarse.min_violation + coarse.modulus);
}

#[test]
fn search_rejects_coarse_grid() {
    assert!(matches!(search_first_order(&nonholonomic(), Sense::Minimize, &SphereGrid::new(3, 4), 1e-6), Err(Error::Config(_))));
}

#[test]
fn search_is_deterministic() {
    let r = nonholonomic();
    let a = search_first_order(&r, Sense::Minimize, &SphereGrid::new(3, 18), 1e-6).unwrap();
    let b = search_first_order(&r, Sense::Minimize, &SphereGrid::new(3, 18), 1e-6).unwrap();
    assert_eq!(a.min_violation.to_bits(), b.min_violation.to_bits());
    assert_eq!(a.argmin, b.argmin);
}

#[test]
fn sphere_grid_covers_sphere() {
    let g = SphereGrid::new(3, 18);
    let pts = g.points();
    assert!(pts.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
    for probe in [v(&[0.3, -0.5, 0.81]), v(&[-1.0, 0.0, 0.0]), v(&[0.0, 0.0, 1.0])] {
        let probe = &probe / probe.norm();
        let d = pts.iter().map(|p| (p - &probe).norm()).fold(f64::INFINITY, f64::min);
        assert!(d <= g.modulus(), "distance {d} > modulus {}", g.modulus());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagation_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
        let r = thrust_arc();
        let p = v(&[a, b]);
        let one = r.propagate_adjoint(&p).unwrap();
        let two = r.propagate_adjoint(&(&p * 2.0)).unwrap();
        for (x, y) in one.psi.iter().zip(&two.psi) {
            prop_assert!((x * 2.0 - y).amax() < 1e-12);
        }
        let _ = c;
    }

    #[test]
    fn verdict_is_scale_invariant(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, k in 0.1f64..10.0) {
        prop_assume!(a * a + b * b + c * c > 1e-4);
        let r = nonholonomic();
        let r1 = check(&r, &[a, b, c]);
        let r2 = check(&r, &[k * a, k * b, k * c]);
        prop_assert_eq!(r1.verdict, r2.verdict);
        prop_assert!((r1.violation - r2.violation).abs() < 1e-12);
    }
}
