use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::{parse_f64, positive, unknown, ScenarioParams};
use crate::dynamics::{time_grid, Atom, ControlSetSpec, ControlSystem, FnControl, GeneralizedControl, ModeDynamics, SimConfig, Trajectory, simulate_control};
use crate::error::{config, Error, Result};
use crate::first_order::{AdmissibilityPolicy, RelaxedReference, SphereGrid};
use crate::second_order::{MeasureVariation, SecondOrderGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceVariant {
    /// `x̂(t) = (0, 0, t)`.
    #[default]
    Nominal,
    /// `x̂(t) = (0, 0, t/2)`, the trajectory the four-atom control generates.
    Relaxed,
}

impl ReferenceVariant {
    fn slope(self) -> f64 {
        match self {
            Self::Nominal => 1.0,
            Self::Relaxed => 0.5,
        }
    }
}

impl FromStr for ReferenceVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nominal" => Ok(Self::Nominal),
            "relaxed" => Ok(Self::Relaxed),
            _ => config(format!("reference: expected 'nominal' or 'relaxed', got '{s}'")),
        }
    }
}

impl fmt::Display for ReferenceVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nominal => "nominal",
            Self::Relaxed => "relaxed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonholonomicParams {
    pub epsilon: f64,
    /// Defaults to `2ε`.
    pub omega: Option<f64>,
    pub horizon: f64,
    pub reference: ReferenceVariant,
}

impl Default for NonholonomicParams {
    fn default() -> Self {
        Self { epsilon: 0.1, omega: None, horizon: 1.0, reference: ReferenceVariant::Nominal }
    }
}

impl NonholonomicParams {
    pub fn omega(&self) -> f64 {
        self.omega.unwrap_or(2.0 * self.epsilon)
    }
}

impl ScenarioParams for NonholonomicParams {
    fn keys() -> &'static [&'static str] {
        &["epsilon", "omega", "horizon", "reference"]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "epsilon" => self.epsilon = parse_f64(key, value)?,
            "omega" => self.omega = Some(parse_f64(key, value)?),
            "horizon" => self.horizon = parse_f64(key, value)?,
            "reference" => self.reference = value.parse()?,
            _ => return unknown(key, Self::keys()),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("epsilon", self.epsilon.to_string()),
            ("omega", self.omega().to_string()),
            ("horizon", self.horizon.to_string()),
            ("reference", self.reference.to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        positive("epsilon", self.epsilon)?;
        positive("omega", self.omega())?;
        positive("horizon", self.horizon)
    }
}

/// `ẋ = (u₁, u₂, x₁u₂ − x₂u₁ + ½(u₁² + u₂²))` on the unit circle.
pub fn nonholonomic_system(horizon: f64) -> Result<ControlSystem> {
    let set = ControlSetSpec::sphere(2, 1.0)?;
    let mode = ModeDynamics::new(
        "nonholonomic",
        set,
        |_t: f64, x: &DVector<f64>, u: &DVector<f64>| {
            DVector::from_vec(vec![u[0], u[1], x[0] * u[1] - x[1] * u[0] + 0.5 * (u[0] * u[0] + u[1] * u[1])])
        },
        |_t: f64, _x: &DVector<f64>, u: &DVector<f64>| {
            let mut j = DMatrix::zeros(3, 3);
            j[(2, 0)] = u[1];
            j[(2, 1)] = -u[0];
            j
        },
    )
    .with_affine_split(|_t: f64, x: &DVector<f64>| {
        let g0 = DVector::from_vec(vec![0.0, 0.0, 0.5]);
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -x[1], x[0]]);
        (g0, g)
    })
    .with_jacobian_split(|_t: f64, _x: &DVector<f64>| {
        let mut j1 = DMatrix::zeros(3, 3);
        j1[(2, 1)] = -1.0;
        let mut j2 = DMatrix::zeros(3, 3);
        j2[(2, 0)] = 1.0;
        (DMatrix::zeros(3, 3), vec![j1, j2])
    });
    ControlSystem::new(3, vec![mode], (0.0, horizon))
}

/// `¼(δ₍₁,₀₎ + δ₍₋₁,₀₎ + δ₍₀,₁₎ + δ₍₀,₋₁₎)` held over the span.
pub fn four_atom_control(span: (f64, f64)) -> Result<GeneralizedControl> {
    let set = ControlSetSpec::sphere(2, 1.0)?;
    let atoms = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]
        .into_iter()
        .map(|(a, b)| Atom::new(DVector::from_vec(vec![a, b]), 0.25))
        .collect();
    GeneralizedControl::constant(atoms, &set, span)
}

pub fn nonholonomic_reference(variant: ReferenceVariant, horizon: f64, dt: f64, policy: AdmissibilityPolicy) -> Result<RelaxedReference> {
    let system = nonholonomic_system(horizon)?;
    let times = time_grid((0.0, horizon), dt, &[]);
    let c = variant.slope();
    let states = times.iter().map(|&t| DVector::from_vec(vec![0.0, 0.0, c * t])).collect();
    let mut tr = Trajectory::from_samples(times.clone(), states)?;
    tr.derivatives = Some(vec![DVector::from_vec(vec![0.0, 0.0, c]); times.len()]);
    let mu = four_atom_control((0.0, horizon))?;
    RelaxedReference::new(system, 0, tr, mu, policy)
}

/// `u(t) = (cos(ωt/ε), sin(ωt/ε))`.
pub fn oscillating_control(epsilon: f64, omega: f64) -> FnControl<impl Fn(f64) -> DVector<f64> + Sync> {
    let k = omega / epsilon;
    FnControl(move |t: f64| DVector::from_vec(vec![(k * t).cos(), (k * t).sin()]))
}

/// Exact solution from the origin under [`oscillating_control`].
pub fn closed_form(epsilon: f64, omega: f64, t: f64) -> DVector<f64> {
    let r = epsilon / omega;
    let s = (t / r).sin();
    DVector::from_vec(vec![r * s, r * (1.0 - (t / r).cos()), (r + 0.5) * t - r * r * s])
}

pub fn simulate_oscillation(epsilon: f64, omega: f64, horizon: f64, dt: f64) -> Result<Trajectory> {
    let sys = nonholonomic_system(horizon)?;
    simulate_control(&sys, 0, &oscillating_control(epsilon, omega), &DVector::zeros(3), (0.0, horizon), &SimConfig::with_dt(dt))
}

/// 10° sphere, `Q0 = diag` with entries in {−1, 0, 1}, and three
/// variations: none, and weight 0.1 moved onto `(1, 0)` or `(0, 1)`.
pub fn default_second_order_grid(horizon: f64) -> Result<SecondOrderGrid> {
    let set = ControlSetSpec::sphere(2, 1.0)?;
    let e = |a: f64, b: f64| DVector::from_vec(vec![a, b]);
    let span = (0.0, horizon);
    Ok(SecondOrderGrid {
        sphere: SphereGrid::degrees(3, 10.0)?,
        q_eigenvalues: vec![-1.0, 0.0, 1.0],
        variations: vec![
            (MeasureVariation::zero(), MeasureVariation::zero()),
            (MeasureVariation::shift(e(-1.0, 0.0), e(1.0, 0.0), 0.1, span, &set)?, MeasureVariation::zero()),
            (MeasureVariation::shift(e(0.0, -1.0), e(0.0, 1.0), 0.1, span, &set)?, MeasureVariation::zero()),
        ],
    })
}
