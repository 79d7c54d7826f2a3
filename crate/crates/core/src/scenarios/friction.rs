use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{parse_f64, positive, unknown, ScenarioParams};
use crate::dynamics::{time_grid, Atom, ControlSetSpec, ControlSystem, GeneralizedControl, ModeDynamics, PiecewiseConstantControl, SimConfig, Trajectory};
use crate::error::{config, Result};
use crate::nonsmooth::{simulate_filippov, DiscontinuitySurface, FilippovReference, FilippovSelection, FilippovSystem, SLIDING};

#[derive(Debug, Clone, PartialEq)]
pub struct FrictionParams {
    /// Pulse width.
    pub delta: f64,
    /// Adjoint coefficient picked from `∂σ(0) = [0, ∞)`.
    pub clarke_gain: f64,
    pub horizon: f64,
}

impl Default for FrictionParams {
    fn default() -> Self {
        Self { delta: 0.05, clarke_gain: 0.0, horizon: 1.0 }
    }
}

impl ScenarioParams for FrictionParams {
    fn keys() -> &'static [&'static str] {
        &["delta", "clarke_gain", "horizon"]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "delta" => self.delta = parse_f64(key, value)?,
            "clarke_gain" => self.clarke_gain = parse_f64(key, value)?,
            "horizon" => self.horizon = parse_f64(key, value)?,
            _ => return unknown(key, Self::keys()),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("delta", self.delta.to_string()),
            ("clarke_gain", self.clarke_gain.to_string()),
            ("horizon", self.horizon.to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        positive("delta", self.delta)?;
        positive("horizon", self.horizon)?;
        if self.clarke_gain < 0.0 {
            return config("clarke_gain must be nonnegative");
        }
        Ok(())
    }
}

fn branch(name: &str, sign: f64) -> Result<ModeDynamics> {
    Ok(ModeDynamics::new(
        name,
        ControlSetSpec::interval(-1.0, 1.0)?,
        move |_t: f64, x: &DVector<f64>, u: &DVector<f64>| DVector::from_vec(vec![x[1], u[0] - sign]),
        |_t: f64, _x: &DVector<f64>, _u: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
    )
    .with_affine_split(move |_t: f64, x: &DVector<f64>| (DVector::from_vec(vec![x[1], -sign]), DMatrix::from_row_slice(2, 1, &[0.0, 1.0]))))
}

/// `ẋ₁ = x₂`, `ẋ₂ = u − sign(x₂)` with the surface `x₂ = 0`.
pub fn friction_system(horizon: f64) -> Result<FilippovSystem> {
    let base = ControlSystem::new(2, vec![branch("upper", 1.0)?, branch("lower", -1.0)?], (0.0, horizon))?;
    let surface = DiscontinuitySurface::new(|x: &DVector<f64>| x[1], |_x: &DVector<f64>| DVector::from_vec(vec![0.0, 1.0]));
    FilippovSystem::new(base, surface)
}

/// `−1, +1, +1, −1`, each held for `delta`.
pub fn pulse_train(delta: f64) -> Result<PiecewiseConstantControl> {
    let v = |a: f64| DVector::from_element(1, a);
    PiecewiseConstantControl::new((0..5).map(|k| k as f64 * delta).collect(), vec![v(-1.0), v(1.0), v(1.0), v(-1.0)])
}

pub fn simulate_pulse_train(delta: f64, dt: f64) -> Result<Trajectory> {
    let sys = friction_system(4.0 * delta)?;
    let u = pulse_train(delta)?;
    let cfg = SimConfig::with_dt(dt.min(delta));
    simulate_filippov(&sys, &u, &DVector::zeros(2), (0.0, 4.0 * delta), &cfg, FilippovSelection::LatchedPerArc)
}

/// Hand-integrated states at `δ`, `2δ`, `3δ`, `4δ`.
pub fn pulse_checkpoints(delta: f64) -> Vec<(f64, DVector<f64>)> {
    let d2 = delta * delta;
    vec![
        (delta, DVector::from_vec(vec![-d2, -2.0 * delta])),
        (2.0 * delta, DVector::from_vec(vec![-2.0 * d2, 0.0])),
        (3.0 * delta, DVector::from_vec(vec![-d2, 2.0 * delta])),
        (4.0 * delta, DVector::from_vec(vec![0.0, 0.0])),
    ]
}

/// `½δ₋₁ + ½δ₁` over the span.
pub fn sliding_control(span: (f64, f64)) -> Result<GeneralizedControl> {
    let set = ControlSetSpec::interval(-1.0, 1.0)?;
    GeneralizedControl::constant(
        vec![Atom::new(DVector::from_element(1, -1.0), 0.5), Atom::new(DVector::from_element(1, 1.0), 0.5)],
        &set,
        span,
    )
}

/// Resting reference `x̂ ≡ 0` with the adjoint `ψ̇ = −Aᵀψ`,
/// `A = [[0, 1], [0, clarke_gain]]`.
pub fn friction_reference(params: &FrictionParams, dt: f64) -> Result<FilippovReference> {
    params.validate()?;
    let sys = friction_system(params.horizon)?;
    let times = time_grid((0.0, params.horizon), dt, &[]);
    let n = times.len();
    let mut tr = Trajectory::from_samples(times, vec![DVector::zeros(2); n])?;
    tr.modes = vec![SLIDING; n];
    tr.derivatives = Some(vec![DVector::zeros(2); n]);
    let k = params.clarke_gain;
    let a = Arc::new(move |_t: f64, _x: &DVector<f64>, _region: usize| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, k]));
    FilippovReference::new(sys, tr, sliding_control((0.0, params.horizon))?, Some(a))
}
