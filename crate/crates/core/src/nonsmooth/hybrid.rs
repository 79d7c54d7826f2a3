use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::surface::{bisect, GradFn, ScalarFn};
use crate::dynamics::{rk4_step, time_grid, ControlSignal, ControlSystem, Event, EventKind, EventPayload, SimConfig, Trajectory};
use crate::error::{config, Error, Result};

pub type ResetFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type ResetJacobianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Which zero crossings of a guard fire its edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    /// `h` goes from positive to nonpositive.
    Falling,
    /// `h` goes from negative to nonnegative.
    Rising,
    Either,
}

impl Crossing {
    pub(crate) fn fired(self, h0: f64, h1: f64) -> bool {
        match self {
            Self::Falling => h0 > 0.0 && h1 <= 0.0,
            Self::Rising => h0 < 0.0 && h1 >= 0.0,
            Self::Either => (h0 > 0.0 && h1 <= 0.0) || (h0 < 0.0 && h1 >= 0.0),
        }
    }
}

#[derive(Clone)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub guard: ScalarFn,
    pub guard_grad: GradFn,
    pub crossing: Crossing,
    pub reset: ResetFn,
    pub reset_jacobian: ResetJacobianFn,
    pub kind: EventKind,
}

impl std::fmt::Debug for Edge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Edge")
            .field("from", &self.from)
            .field("to", &self.to)
            .field("crossing", &self.crossing)
            .field("kind", &self.kind)
            .finish()
    }
}

impl Edge {
    /// Edge with the identity reset.
    pub fn switch<G, D>(from: usize, to: usize, crossing: Crossing, guard: G, guard_grad: D) -> Self
    where
        G: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        D: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            from,
            to,
            guard: Arc::new(guard),
            guard_grad: Arc::new(guard_grad),
            crossing,
            reset: Arc::new(|x: &DVector<f64>| x.clone()),
            reset_jacobian: Arc::new(|x: &DVector<f64>| DMatrix::identity(x.len(), x.len())),
            kind: EventKind::ModeSwitch,
        }
    }

    pub fn with_reset<R, J>(mut self, kind: EventKind, reset: R, jac: J) -> Self
    where
        R: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.kind = kind;
        self.reset = Arc::new(reset);
        self.reset_jacobian = Arc::new(jac);
        self
    }
}

/// Modes of a [`ControlSystem`] connected by guarded edges with resets.
#[derive(Debug, Clone)]
pub struct HybridAutomaton {
    pub system: ControlSystem,
    pub edges: Vec<Edge>,
}

impl HybridAutomaton {
    pub fn new(system: ControlSystem, edges: Vec<Edge>) -> Result<Self> {
        let nq = system.modes.len();
        let n = system.state_dim;
        let x = DVector::zeros(n);
        for (i, e) in edges.iter().enumerate() {
            if e.from >= nq || e.to >= nq {
                return config(format!("edge {i} references a missing mode"));
            }
            if (e.reset)(&x).len() != n || (e.reset_jacobian)(&x).shape() != (n, n) || (e.guard_grad)(&x).len() != n {
                return config(format!("edge {i} reset or guard disagrees with state_dim {n}"));
            }
        }
        Ok(Self { system, edges })
    }

    /// Condition numbers of the reset Jacobians at every event of `tr`.
    pub fn reset_condition_numbers(&self, tr: &Trajectory) -> Vec<f64> {
        tr.events
            .iter()
            .filter_map(|e| e.payload.edge)
            .zip(tr.events.iter())
            .map(|(i, e)| condition_number(&(self.edges[i].reset_jacobian)(&e.payload.state_before)))
            .collect()
    }
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let hi = sv.iter().copied().fold(0.0, f64::max);
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Control law for hybrid simulations, sampled once per step.
pub trait HybridControl: Sync {
    /// Control at time `t` given the state at the step start, the current
    /// mode and the number of events so far.
    fn value(&self, t: f64, x: &DVector<f64>, mode: usize, events: usize) -> DVector<f64>;
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

pub struct HybridFnControl<F>(pub F);

impl<F: Fn(f64, &DVector<f64>, usize, usize) -> DVector<f64> + Sync> HybridControl for HybridFnControl<F> {
    fn value(&self, t: f64, x: &DVector<f64>, mode: usize, events: usize) -> DVector<f64> {
        (self.0)(t, x, mode, events)
    }
}

/// Open-loop signal used in every mode.
pub struct SignalControl<'a>(pub &'a dyn ControlSignal);

impl HybridControl for SignalControl<'_> {
    fn value(&self, t: f64, _x: &DVector<f64>, _mode: usize, _events: usize) -> DVector<f64> {
        self.0.value(t)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints()
    }
}

pub fn simulate_hybrid(
    aut: &HybridAutomaton,
    control: &dyn HybridControl,
    x0: &DVector<f64>,
    q0: usize,
    span: (f64, f64),
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let sys = &aut.system;
    sys.mode(q0)?;
    sys.check_state(x0)?;
    if x0.iter().any(|v| !v.is_finite()) {
        return config("x0 must be finite");
    }
    if !(span.1 > span.0) {
        return config("simulation span must satisfy tb > ta");
    }
    let grid = time_grid(span, cfg.dt, &control.breakpoints());
    let mut tr = Trajectory::default();
    let mut derivs = Vec::with_capacity(grid.len());
    let mut x = x0.clone();
    let mut q = q0;

    let push = |tr: &mut Trajectory, derivs: &mut Vec<DVector<f64>>, t: f64, x: &DVector<f64>, q: usize, u: DVector<f64>| {
        derivs.push(sys.modes[q].eval(t, x, &u));
        tr.times.push(t);
        tr.states.push(x.clone());
        tr.modes.push(q);
        tr.controls.push(u);
    };

    let step_mid = |k: usize| if grid.len() > 1 { 0.5 * (grid[k] + grid[(k + 1).min(grid.len() - 1)]) } else { grid[0] };
    let u0 = control.value(step_mid(0), &x, q, 0);
    push(&mut tr, &mut derivs, grid[0], &x, q, u0);

    for k in 0..grid.len() - 1 {
        let (a, b) = (grid[k], grid[k + 1]);
        let t_tol = 1e-12 * (1.0 + b.abs());
        let mut s = a;
        let mut pushed_end = false;
        while s < b - t_tol {
            let u = control.value(0.5 * (s + b), &x, q, tr.events.len());
            let m = &sys.modes[q];
            let field = |t: f64, y: &DVector<f64>| m.eval(t, y, &u);
            let h = b - s;
            let x_new = rk4_step(&field, s, &x, h);
            if x_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integration { time: b, detail: "non-finite state".into() });
            }
            let mut first: Option<(f64, usize, DVector<f64>)> = None;
            for (i, e) in aut.edges.iter().enumerate().filter(|(_, e)| e.from == q) {
                let h0 = (e.guard)(&x);
                if !e.crossing.fired(h0, (e.guard)(&x_new)) {
                    continue;
                }
                let (tau, xt) = bisect(&field, s, &x, h, cfg.event_tol, |y, _| e.crossing.fired(h0, (e.guard)(y)));
                if first.as_ref().is_none_or(|f| tau < f.0 - cfg.event_tol) {
                    first = Some((tau, i, xt));
                }
            }
            let Some((tau, i, xt)) = first else {
                s = b;
                x = x_new;
                continue;
            };
            let e = &aut.edges[i];
            let xp = (e.reset)(&xt);
            let tau = if tau >= b - t_tol { b } else { tau };
            let n_ev = tr.events.len() + 1;
            let up = control.value(0.5 * (tau + b).min(b), &xp, e.to, n_ev);
            let up = if tau == b { control.value(step_mid(k + 1), &xp, e.to, n_ev) } else { up };
            if tau <= s + t_tol {
                let last = tr.len() - 1;
                tr.states[last] = xp.clone();
                tr.modes[last] = e.to;
                derivs[last] = sys.modes[e.to].eval(tau, &xp, &up);
                tr.controls[last] = up;
            } else {
                push(&mut tr, &mut derivs, tau, &xp, e.to, up);
            }
            tr.events.push(Event {
                time: tau,
                kind: e.kind,
                index: tr.len() - 1,
                payload: EventPayload { edge: Some(i), from_mode: q, to_mode: e.to, state_before: xt, state_after: xp.clone() },
            });
            if tr.events.len() > cfg.max_events {
                return Err(Error::Zeno { events: cfg.max_events });
            }
            if tau == b {
                pushed_end = true;
            }
            s = tau;
            x = xp;
            q = e.to;
        }
        if !pushed_end {
            let u = control.value(step_mid(k + 1), &x, q, tr.events.len());
            push(&mut tr, &mut derivs, b, &x, q, u);
        }
    }
    tr.derivatives = Some(derivs);
    if !cfg.dense_output {
        tr.derivatives = None;
    }
    tr.validate()?;
    Ok(tr)
}
