use nalgebra::{DMatrix, DVector};

use super::{parse_f64, positive, unknown, ScenarioParams};
use crate::dynamics::{ControlSetSpec, ControlSystem, EventKind, ModeDynamics, SimConfig, Trajectory};
use crate::error::{config, Error, Result};
use crate::nonsmooth::{simulate_hybrid, Crossing, Edge, HybridAutomaton, HybridFnControl, HybridReference};

/// Soft-ground mode, restitution `e1`.
pub const SOFT: usize = 0;
/// Hard-ground mode, restitution `e2`; the initial mode.
pub const HARD: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BouncingBallParams {
    pub g: f64,
    pub u_max: f64,
    pub y0: f64,
    pub v0: f64,
    /// Height below which the ground is soft.
    pub y_switch: f64,
    pub e1: f64,
    pub e2: f64,
}

impl Default for BouncingBallParams {
    fn default() -> Self {
        Self { g: 9.8, u_max: 10.8, y0: 1.0, v0: -6.0, y_switch: 0.5, e1: 0.5, e2: 0.8 }
    }
}

impl ScenarioParams for BouncingBallParams {
    fn keys() -> &'static [&'static str] {
        &["g", "u_max", "y0", "v0", "y_switch", "e1", "e2"]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = parse_f64(key, value)?;
        match key {
            "g" => self.g = v,
            "u_max" => self.u_max = v,
            "y0" => self.y0 = v,
            "v0" => self.v0 = v,
            "y_switch" => self.y_switch = v,
            "e1" => self.e1 = v,
            "e2" => self.e2 = v,
            _ => return unknown(key, Self::keys()),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("g", self.g.to_string()),
            ("u_max", self.u_max.to_string()),
            ("y0", self.y0.to_string()),
            ("v0", self.v0.to_string()),
            ("y_switch", self.y_switch.to_string()),
            ("e1", self.e1.to_string()),
            ("e2", self.e2.to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        positive("g", self.g)?;
        positive("y0", self.y0)?;
        if self.u_max < 0.0 {
            return config("u_max must be nonnegative");
        }
        for (k, e) in [("e1", self.e1), ("e2", self.e2)] {
            if !(e > 0.0 && e <= 1.0) {
                return config(format!("{k} must lie in (0, 1], got {e}"));
            }
        }
        Ok(())
    }
}

fn ball_mode(name: &str, g: f64, u_max: f64) -> Result<ModeDynamics> {
    Ok(ModeDynamics::new(
        name,
        ControlSetSpec::interval(0.0, u_max)?,
        move |_t: f64, x: &DVector<f64>, u: &DVector<f64>| DVector::from_vec(vec![x[1], u[0] - g]),
        |_t: f64, _x: &DVector<f64>, _u: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
    )
    .with_affine_split(move |_t: f64, x: &DVector<f64>| (DVector::from_vec(vec![x[1], -g]), DMatrix::from_row_slice(2, 1, &[0.0, 1.0]))))
}

fn impact(from: usize, e: f64) -> Edge {
    Edge::switch(from, from, Crossing::Falling, |x: &DVector<f64>| x[0], |_x: &DVector<f64>| DVector::from_vec(vec![1.0, 0.0])).with_reset(
        EventKind::Impact,
        move |x: &DVector<f64>| DVector::from_vec(vec![x[0], -e * x[1]]),
        move |_x: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -e]),
    )
}

/// `ÿ = −g + u`, `u ∈ [0, u_max]`; hard ground above `y_switch`, soft below.
pub fn bouncing_ball_automaton(p: &BouncingBallParams, horizon: f64) -> Result<HybridAutomaton> {
    p.validate()?;
    let sys = ControlSystem::new(2, vec![ball_mode("soft", p.g, p.u_max)?, ball_mode("hard", p.g, p.u_max)?], (0.0, horizon))?;
    let ys = p.y_switch;
    let edges = vec![
        Edge::switch(HARD, SOFT, Crossing::Falling, move |x: &DVector<f64>| x[0] - ys, |_x: &DVector<f64>| DVector::from_vec(vec![1.0, 0.0])),
        impact(SOFT, p.e1),
        impact(HARD, p.e2),
    ];
    HybridAutomaton::new(sys, edges)
}

#[derive(Debug, Clone)]
pub struct BouncingBallRun {
    pub automaton: HybridAutomaton,
    pub trajectory: Trajectory,
    pub impact_time: f64,
    /// Apex after the first impact; the terminal time.
    pub apex_time: f64,
}

fn thrust_then_coast(p: &BouncingBallParams) -> HybridFnControl<impl Fn(f64, &DVector<f64>, usize, usize) -> DVector<f64> + Sync> {
    let before = usize::from(p.y0 > p.y_switch);
    let u_max = p.u_max;
    HybridFnControl(move |_t: f64, _x: &DVector<f64>, _q: usize, events: usize| DVector::from_element(1, if events <= before { u_max } else { 0.0 }))
}

/// Full thrust until the first impact, then free flight up to the apex.
pub fn simulate_bouncing_ball(p: &BouncingBallParams, cfg: &SimConfig) -> Result<BouncingBallRun> {
    let x0 = DVector::from_vec(vec![p.y0, p.v0]);
    let probe_end = 10.0;
    let aut = bouncing_ball_automaton(p, probe_end)?;
    let control = thrust_then_coast(p);
    let probe = simulate_hybrid(&aut, &control, &x0, HARD, (0.0, probe_end), cfg)?;
    let first = probe
        .events
        .iter()
        .find(|e| e.kind == EventKind::Impact)
        .ok_or_else(|| Error::Precondition { detail: "ball never reaches the ground".into(), defect: 0.0, time: probe_end })?;
    let impact_time = first.time;
    let apex_time = impact_time + first.payload.state_after[1] / p.g;
    let aut = bouncing_ball_automaton(p, apex_time)?;
    let trajectory = simulate_hybrid(&aut, &control, &x0, HARD, (0.0, apex_time), cfg)?;
    Ok(BouncingBallRun { automaton: aut, trajectory, impact_time, apex_time })
}

pub fn bouncing_ball_reference(p: &BouncingBallParams, cfg: &SimConfig) -> Result<(HybridReference, BouncingBallRun)> {
    let run = simulate_bouncing_ball(p, cfg)?;
    let r = HybridReference::new(run.automaton.clone(), run.trajectory.clone())?;
    Ok((r, run))
}

/// `ψ(0) = (1, C)` with `C = τ + 1`, so `ψ₂(τ⁻) = 1`.
pub fn bouncing_candidate_psi0(impact_time: f64) -> DVector<f64> {
    DVector::from_vec(vec![1.0, impact_time + 1.0])
}

/// Free fall from rest at height `y0`: impact time and rebound speed.
pub fn free_fall_impact(g: f64, y0: f64, e: f64) -> (f64, f64) {
    let t = (2.0 * y0 / g).sqrt();
    (t, e * g * t)
}
