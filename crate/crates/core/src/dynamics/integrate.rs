use nalgebra::DVector;

use super::relaxed::ControlSignal;
use super::system::ControlSystem;
use super::trajectory::Trajectory;
use crate::error::{config, Error, Result};

/// Step size and event settings shared by all simulators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub event_tol: f64,
    pub dense_output: bool,
    /// Zeno cutoff for event-driven simulators.
    pub max_events: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 1e-3, event_tol: 1e-10, dense_output: true, max_events: 10_000 }
    }
}

impl SimConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, event_tol: 1e-10_f64.min(dt), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return config(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.event_tol > 0.0 && self.event_tol <= self.dt) {
            return config(format!("event_tol must lie in (0, dt], got {}", self.event_tol));
        }
        Ok(())
    }
}

/// Uniform grid `ta + k·dt` merged with `breaks` strictly inside the span;
/// always ends exactly at `tb`.
pub fn time_grid(span: (f64, f64), dt: f64, breaks: &[f64]) -> Vec<f64> {
    let (ta, tb) = span;
    let tol = 1e-12 * (1.0 + ta.abs().max(tb.abs()));
    let mut grid = Vec::with_capacity(((tb - ta) / dt) as usize + 2 + breaks.len());
    let mut k = 0usize;
    loop {
        let t = ta + k as f64 * dt;
        if t >= tb - tol {
            break;
        }
        grid.push(t);
        k += 1;
    }
    grid.push(tb);
    if breaks.iter().any(|&b| b > ta + tol && b < tb - tol) {
        grid.extend(breaks.iter().copied().filter(|&b| b > ta + tol && b < tb - tol));
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|b, a| (*b - *a).abs() <= tol);
        if let Some(last) = grid.last_mut() {
            *last = tb;
        }
    }
    grid
}

/// One classical RK4 step.
pub fn rk4_step<F: Fn(f64, &DVector<f64>) -> DVector<f64>>(f: &F, t: f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = f(t, x);
    rk4_step_with_k1(f, t, x, h, k1)
}

pub(crate) fn rk4_step_with_k1<F: Fn(f64, &DVector<f64>) -> DVector<f64>>(
    f: &F,
    t: f64,
    x: &DVector<f64>,
    h: f64,
    k1: DVector<f64>,
) -> DVector<f64> {
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Marches RK4 over `grid`. `rhs(a, b)` returns the field to use on the step
/// `[a, b]`, which lets callers freeze piecewise-constant controls per step.
pub(crate) fn march<G, F>(x0: &DVector<f64>, grid: &[f64], dense: bool, rhs: G) -> Result<Trajectory>
where
    G: Fn(f64, f64) -> F,
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let mut states = Vec::with_capacity(grid.len());
    let mut derivs = Vec::with_capacity(if dense { grid.len() } else { 0 });
    let mut x = x0.clone();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration { time: grid[0], detail: "non-finite initial state".into() });
    }
    for k in 0..grid.len() - 1 {
        let (a, b) = (grid[k], grid[k + 1]);
        let f = rhs(a, b);
        let k1 = f(a, &x);
        let next = rk4_step_with_k1(&f, a, &x, b - a, k1.clone());
        states.push(std::mem::replace(&mut x, next));
        if dense {
            derivs.push(k1);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { time: b, detail: "non-finite state".into() });
        }
        if dense && k + 2 == grid.len() {
            derivs.push(f(b, &x));
        }
    }
    if grid.len() == 1 && dense {
        derivs.push(rhs(grid[0], grid[0])(grid[0], &x));
    }
    states.push(x);
    Ok(Trajectory {
        times: grid.to_vec(),
        modes: vec![0; grid.len()],
        states,
        controls: Vec::new(),
        derivatives: dense.then_some(derivs),
        events: Vec::new(),
    })
}

fn check_span(span: (f64, f64)) -> Result<()> {
    if !(span.0.is_finite() && span.1.is_finite() && span.1 > span.0) {
        return config(format!("integration span must satisfy tb > ta, got [{}, {}]", span.0, span.1));
    }
    Ok(())
}

/// Fixed-step classical RK4 on `[ta, tb]`; the last sample is exactly `tb`.
pub fn integrate_ode<F>(rhs: F, x0: &DVector<f64>, span: (f64, f64), cfg: &SimConfig) -> Result<Trajectory>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    integrate_ode_with_breaks(rhs, x0, span, &[], cfg)
}

/// As [`integrate_ode`], additionally stepping exactly onto `breaks`.
pub fn integrate_ode_with_breaks<F>(
    rhs: F,
    x0: &DVector<f64>,
    span: (f64, f64),
    breaks: &[f64],
    cfg: &SimConfig,
) -> Result<Trajectory>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    cfg.validate()?;
    check_span(span)?;
    let grid = time_grid(span, cfg.dt, breaks);
    march(x0, &grid, cfg.dense_output, |_, _| &rhs)
}

/// Integrates one mode of `system` under an ordinary control signal. The
/// control is frozen at its value at each step's midpoint, so jumps placed at
/// breakpoints are resolved exactly.
pub fn simulate_control(
    system: &ControlSystem,
    mode: usize,
    signal: &dyn ControlSignal,
    x0: &DVector<f64>,
    span: (f64, f64),
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_span(span)?;
    system.check_state(x0)?;
    let m = system.mode(mode)?;
    let grid = time_grid(span, cfg.dt, &signal.breakpoints());
    let mut tr = march(x0, &grid, cfg.dense_output, |a, b| {
        let u = signal.value(0.5 * (a + b));
        move |t: f64, x: &DVector<f64>| m.eval(t, x, &u)
    })?;
    tr.modes = vec![mode; grid.len()];
    let mut controls: Vec<DVector<f64>> =
        grid.windows(2).map(|w| signal.value(0.5 * (w[0] + w[1]))).collect();
    controls.push(controls.last().cloned().unwrap_or_else(|| signal.value(span.1)));
    tr.controls = controls;
    Ok(tr)
}
