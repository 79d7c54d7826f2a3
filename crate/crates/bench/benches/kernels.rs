use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lambdaset_core::first_order::{search_first_order, AdmissibilityPolicy, FirstOrderCandidate, FirstOrderReference, SphereGrid};
use lambdaset_core::scenarios::{
    nonholonomic_reference, simulate_oscillation, temperature_cost, temperature_reduction, temperature_system, ReferenceVariant,
    TemperatureParams,
};
use lambdaset_core::second_order::{check_second_order_candidate, MeasureVariation, QProfile, SecondOrderCandidate};
use lambdaset_core::stochastic::{monte_carlo_cost, reduced_adjoint_propagate, ClampedFeedback, EnsembleConfig};
use lambdaset_core::{integrate_ode, DMatrix, DVector, Sense, SimConfig};

fn integration(c: &mut Criterion) {
    let x0 = DVector::from_element(1, 1.0);
    c.bench_function("rk4 decay 1e4 steps", |b| {
        b.iter(|| integrate_ode(|_t, x: &DVector<f64>| -x, black_box(&x0), (0.0, 1.0), &SimConfig::with_dt(1e-4)).unwrap())
    });
    c.bench_function("nonholonomic oscillation dt 1e-4", |b| b.iter(|| simulate_oscillation(black_box(0.1), 0.2, 1.0, 1e-4).unwrap()));
}

fn certificates(c: &mut Criterion) {
    let r = nonholonomic_reference(ReferenceVariant::Nominal, 1.0, 1e-2, AdmissibilityPolicy::Report).unwrap();
    let cand = FirstOrderCandidate::new(DVector::from_vec(vec![0.0, 0.0, -1.0]), Sense::Minimize).unwrap();
    c.bench_function("first-order check", |b| b.iter(|| r.check(black_box(&cand), 1e-6).unwrap()));
    c.bench_function("first-order search 10 degrees", |b| {
        b.iter(|| search_first_order(&r, Sense::Minimize, &SphereGrid::degrees(3, 10.0).unwrap(), 1e-6).unwrap())
    });
    let second = SecondOrderCandidate {
        psi0: DVector::from_vec(vec![0.0, 0.0, -1.0]),
        q: QProfile::RiccatiFlow { q0: DMatrix::identity(3, 3) },
        psi_scalar0: 0.0,
        dmu: MeasureVariation::zero(),
        d2mu: MeasureVariation::zero(),
        sense: Sense::Minimize,
    };
    c.bench_function("second-order check", |b| b.iter(|| check_second_order_candidate(&r, black_box(&second), 1e-6, 1e-9).unwrap()));
}

fn monte_carlo(c: &mut Criterion) {
    let p = TemperatureParams::default();
    let sys = temperature_system(&p).unwrap();
    let cost = temperature_cost(&p).unwrap();
    let cand = reduced_adjoint_propagate(&sys, (0.0, p.horizon), &cost, &temperature_reduction(&p, 1e-2)).unwrap();
    let law = ClampedFeedback { candidate: &cand, alphas: p.alphas(), lambda_weight: p.lambda, bounds: (0.0, p.u_max) };
    let x0 = DVector::from_element(1, p.x0);
    let mut group = c.benchmark_group("monte carlo");
    group.sample_size(10);
    group.bench_function("temperature 1000 paths", |b| {
        b.iter(|| monte_carlo_cost(&sys, &law, &cost, &x0, p.initial_mode(), (0.0, p.horizon), &EnsembleConfig::new(1000, black_box(42), 1e-2)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, integration, certificates, monte_carlo);
criterion_main!(benches);
