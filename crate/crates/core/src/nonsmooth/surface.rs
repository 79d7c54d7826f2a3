use std::sync::Arc;

use nalgebra::DVector;

use crate::dynamics::{fd_jacobian, rk4_step, time_grid, ControlSignal, ControlSystem, Event, EventKind, EventPayload, MaxConfig, SimConfig, Trajectory};
use crate::error::{config, Error, Result};

pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// `S = {x : g(x) = 0}`.
#[derive(Clone)]
pub struct DiscontinuitySurface {
    pub g: ScalarFn,
    pub grad_g: GradFn,
}

impl std::fmt::Debug for DiscontinuitySurface {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("DiscontinuitySurface")
    }
}

impl DiscontinuitySurface {
    pub fn new<G, D>(g: G, grad_g: D) -> Self
    where
        G: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        D: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self { g: Arc::new(g), grad_g: Arc::new(grad_g) }
    }

    /// Worst relative error of `grad_g` against central differences.
    pub fn gradient_self_test(&self, probes: &[DVector<f64>]) -> f64 {
        probes
            .iter()
            .map(|x| {
                let fd = fd_jacobian(|y| DVector::from_element(1, (self.g)(y)), x).row(0).transpose();
                let gr = (self.grad_g)(x);
                (gr - &fd).norm() / fd.norm().max(1.0)
            })
            .fold(0.0, f64::max)
    }
}

/// Two one-sided branches (mode 0 for `g > 0`, mode 1 for `g < 0`) and the
/// surface separating them.
#[derive(Debug, Clone)]
pub struct FilippovSystem {
    pub base: ControlSystem,
    pub surface: DiscontinuitySurface,
    pub surface_tol_scale: f64,
}

pub const UPPER: usize = 0;
pub const LOWER: usize = 1;
/// Mode label used for samples on a sliding arc.
pub const SLIDING: usize = 2;

impl FilippovSystem {
    pub fn new(base: ControlSystem, surface: DiscontinuitySurface) -> Result<Self> {
        if base.modes.len() != 2 {
            return config("a Filippov system needs exactly two branch modes");
        }
        Ok(Self { base, surface, surface_tol_scale: 1e-9 })
    }

    pub fn surface_tol(&self, x: &DVector<f64>) -> f64 {
        self.surface_tol_scale * (1.0 + x.norm())
    }

    pub fn g(&self, x: &DVector<f64>) -> f64 {
        (self.surface.g)(x)
    }

    pub fn on_surface(&self, x: &DVector<f64>) -> bool {
        self.g(x).abs() <= self.surface_tol(x)
    }

    fn branch(&self, q: usize, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.base.modes[q].eval(t, x, u)
    }

    /// Normal components `(⟨∇g, f⁺⟩, ⟨∇g, f⁻⟩)`.
    pub fn normal_speeds(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> (f64, f64) {
        let n = (self.surface.grad_g)(x);
        (n.dot(&self.branch(UPPER, t, x, u)), n.dot(&self.branch(LOWER, t, x, u)))
    }

    /// Convex weight of the upper branch on a sliding arc.
    pub fn sliding_alpha(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        let (ap, am) = self.normal_speeds(t, x, u);
        let den = am - ap;
        if den.abs() <= 1e-14 * (1.0 + ap.abs() + am.abs()) {
            return Err(Error::DegenerateSliding { time: t });
        }
        Ok(am / den)
    }

    pub fn sliding_field(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let a = self.sliding_alpha(t, x, u)?;
        Ok(self.branch(UPPER, t, x, u) * a + self.branch(LOWER, t, x, u) * (1.0 - a))
    }

    /// Single-mode system whose field is the equal-weight average of the two
    /// branches, i.e. the set-valued term replaced by its symmetric selection.
    pub fn surface_system(&self) -> Result<ControlSystem> {
        let up = self.base.modes[UPPER].clone();
        let lo = self.base.modes[LOWER].clone();
        let (u2, l2) = (up.clone(), lo.clone());
        let m = crate::dynamics::ModeDynamics::new(
            "surface",
            up.control_set.clone(),
            move |t, x, u| (up.eval(t, x, u) + lo.eval(t, x, u)) * 0.5,
            move |t, x, u| (u2.jac(t, x, u) + l2.jac(t, x, u)) * 0.5,
        );
        ControlSystem::new(self.base.state_dim, vec![m], self.base.time_horizon)
    }
}

/// Velocity set at one point, described by generators of its convex hull.
#[derive(Debug, Clone, PartialEq)]
pub enum FilippovSet {
    Branch { mode: usize, generators: Vec<DVector<f64>> },
    Hull { generators: Vec<DVector<f64>> },
}

impl FilippovSet {
    pub fn generators(&self) -> &[DVector<f64>] {
        match self {
            Self::Branch { generators, .. } | Self::Hull { generators } => generators,
        }
    }

    /// `sup_{v ∈ F} ⟨ψ, v⟩`.
    pub fn support(&self, psi: &DVector<f64>) -> f64 {
        self.generators().iter().map(|v| psi.dot(v)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(min, max)` of component `i` over the hull.
    pub fn component_range(&self, i: usize) -> (f64, f64) {
        self.generators()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[i]), hi.max(v[i])))
    }
}

pub fn filippov_set_eval(sys: &FilippovSystem, t: f64, x: &DVector<f64>, cfg: &MaxConfig) -> Result<FilippovSet> {
    sys.base.check_state(x)?;
    let gens = |q: usize| -> Vec<DVector<f64>> {
        sys.base.modes[q].control_set.extreme_points(cfg).iter().map(|u| sys.branch(q, t, x, u)).collect()
    };
    let g = sys.g(x);
    if g.abs() > sys.surface_tol(x) {
        let mode = if g > 0.0 { UPPER } else { LOWER };
        return Ok(FilippovSet::Branch { mode, generators: gens(mode) });
    }
    let mut generators = gens(UPPER);
    generators.extend(gens(LOWER));
    Ok(FilippovSet::Hull { generators })
}

/// How the active field is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilippovSelection {
    /// Side of the surface decides; sliding by the attractivity test.
    Strict,
    /// The branch is chosen at the start of every control arc and held for
    /// the whole arc. On the surface the branch whose field leaves the
    /// surface is taken, falling back to sliding; off the surface the side
    /// decides. Later surface crossings within the arc are only logged.
    LatchedPerArc,
}

fn region_field(sys: &FilippovSystem, region: usize, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    if region == SLIDING {
        sys.sliding_field(t, x, u)
    } else {
        Ok(sys.branch(region, t, x, u))
    }
}

fn strict_region_on_surface(sys: &FilippovSystem, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> Result<usize> {
    let (ap, am) = sys.normal_speeds(t, x, u);
    if ap <= 0.0 && am >= 0.0 {
        sys.sliding_alpha(t, x, u)?;
        Ok(SLIDING)
    } else if ap > 0.0 {
        // Leaving upwards, or crossing from below.
        Ok(UPPER)
    } else {
        Ok(LOWER)
    }
}

fn latched_region(sys: &FilippovSystem, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> Result<usize> {
    if !sys.on_surface(x) {
        return Ok(if sys.g(x) > 0.0 { UPPER } else { LOWER });
    }
    let (ap, am) = sys.normal_speeds(t, x, u);
    let eps = 1e-12 * (1.0 + ap.abs() + am.abs());
    let (dp, dm) = (ap.abs() > eps, am.abs() > eps);
    Ok(match (dp, dm) {
        (true, false) => UPPER,
        (false, true) => LOWER,
        (true, true) if ap > 0.0 => UPPER,
        (true, true) if am < 0.0 => LOWER,
        _ => match sys.sliding_alpha(t, x, u) {
            Ok(a) if (0.0..=1.0).contains(&a) => SLIDING,
            _ => UPPER,
        },
    })
}

fn project(sys: &FilippovSystem, x: &DVector<f64>) -> DVector<f64> {
    let n = (sys.surface.grad_g)(x);
    let nn = n.norm_squared();
    if nn > 0.0 {
        x - n * (sys.g(x) / nn)
    } else {
        x.clone()
    }
}

fn region_kind(from: usize, to: usize) -> EventKind {
    if to == SLIDING {
        EventKind::SlidingEnter
    } else if from == SLIDING {
        EventKind::SlidingExit
    } else {
        EventKind::GuardCross
    }
}

struct Recorder {
    tr: Trajectory,
    derivs: Vec<DVector<f64>>,
    max_events: usize,
}

impl Recorder {
    fn push(&mut self, t: f64, x: DVector<f64>, region: usize, u: DVector<f64>, v: DVector<f64>) {
        self.tr.times.push(t);
        self.tr.states.push(x);
        self.tr.modes.push(region);
        self.tr.controls.push(u);
        self.derivs.push(v);
    }

    fn event(&mut self, time: f64, kind: EventKind, from: usize, to: usize, before: DVector<f64>, after: DVector<f64>) -> Result<()> {
        let index = self.tr.times.len() - 1;
        self.tr.events.push(Event {
            time,
            kind,
            index,
            payload: EventPayload { edge: None, from_mode: from, to_mode: to, state_before: before, state_after: after },
        });
        if self.tr.events.len() > self.max_events {
            return Err(Error::Zeno { events: self.max_events });
        }
        Ok(())
    }
}

/// Simulates a Filippov system under an ordinary control signal. Mode labels
/// are [`UPPER`], [`LOWER`] or [`SLIDING`].
pub fn simulate_filippov(
    sys: &FilippovSystem,
    u: &dyn ControlSignal,
    x0: &DVector<f64>,
    span: (f64, f64),
    cfg: &SimConfig,
    selection: FilippovSelection,
) -> Result<Trajectory> {
    cfg.validate()?;
    sys.base.check_state(x0)?;
    if x0.iter().any(|v| !v.is_finite()) {
        return config("x0 must be finite");
    }
    if !(span.1 > span.0) {
        return config("simulation span must satisfy tb > ta");
    }
    let breaks = u.breakpoints();
    let grid = time_grid(span, cfg.dt, &breaks);
    let is_break = |t: f64| breaks.iter().any(|&b| (b - t).abs() <= 1e-12 * (1.0 + t.abs()));
    let mut rec = Recorder { tr: Trajectory::default(), derivs: Vec::new(), max_events: cfg.max_events };
    let mut x = x0.clone();
    let u0 = u.value(0.5 * (grid[0] + grid[1.min(grid.len() - 1)]));
    let mut region = match selection {
        FilippovSelection::Strict if sys.on_surface(&x) => strict_region_on_surface(sys, grid[0], &x, &u0)?,
        FilippovSelection::Strict => if sys.g(&x) > 0.0 { UPPER } else { LOWER },
        FilippovSelection::LatchedPerArc => latched_region(sys, grid[0], &x, &u0)?,
    };
    let v0 = region_field(sys, region, grid[0], &x, &u0)?;
    rec.push(grid[0], x.clone(), region, u0, v0);

    for k in 0..grid.len() - 1 {
        let (a, b) = (grid[k], grid[k + 1]);
        let uk = u.value(0.5 * (a + b));
        let mut s = a;
        // region update at the start of the step
        let new_region = match selection {
            FilippovSelection::LatchedPerArc if k == 0 || is_break(a) => latched_region(sys, a, &x, &uk)?,
            FilippovSelection::LatchedPerArc => region,
            FilippovSelection::Strict => {
                if region == SLIDING {
                    let al = sys.sliding_alpha(a, &x, &uk)?;
                    if (0.0..=1.0).contains(&al) {
                        SLIDING
                    } else {
                        let (ap, _) = sys.normal_speeds(a, &x, &uk);
                        if ap > 0.0 { UPPER } else { LOWER }
                    }
                } else if sys.on_surface(&x) {
                    strict_region_on_surface(sys, a, &x, &uk)?
                } else {
                    region
                }
            }
        };
        if new_region != region {
            let last = rec.tr.len() - 1;
            rec.tr.modes[last] = new_region;
            rec.tr.controls[last] = uk.clone();
            rec.derivs[last] = region_field(sys, new_region, a, &x, &uk)?;
            if k > 0 || selection == FilippovSelection::Strict {
                rec.event(a, region_kind(region, new_region), region, new_region, x.clone(), x.clone())?;
            }
            region = new_region;
        }
        let t_tol = 1e-12 * (1.0 + b.abs());
        let mut pushed_end = false;
        while s < b - t_tol {
            let h = b - s;
            let field = |t: f64, y: &DVector<f64>| region_field(sys, region, t, y, &uk).unwrap_or_else(|_| DVector::from_element(y.len(), f64::NAN));
            let x_new = rk4_step(&field, s, &x, h);
            if x_new.iter().any(|v| !v.is_finite()) {
                if region == SLIDING {
                    sys.sliding_alpha(b, &x_new, &uk)?;
                }
                return Err(Error::Integration { time: b, detail: "non-finite state".into() });
            }
            if region == SLIDING {
                let x_new = project(sys, &x_new);
                let al = sys.sliding_alpha(b, &x_new, &uk)?;
                if selection == FilippovSelection::Strict && !(0.0..=1.0).contains(&al) {
                    let inside = |y: &DVector<f64>, t: f64| sys.sliding_alpha(t, y, &uk).is_ok_and(|a| (0.0..=1.0).contains(&a));
                    let (tau, xt) = bisect(&field, s, &x, h, cfg.event_tol, |y, t| !inside(y, t));
                    let xt = project(sys, &xt);
                    let (ap, _) = sys.normal_speeds(tau, &xt, &uk);
                    let next = if ap > 0.0 { UPPER } else { LOWER };
                    let v = region_field(sys, next, tau, &xt, &uk)?;
                    if tau < b - t_tol {
                        rec.push(tau, xt.clone(), next, uk.clone(), v);
                        rec.event(tau, EventKind::SlidingExit, SLIDING, next, xt.clone(), xt.clone())?;
                        region = next;
                        s = tau;
                        x = xt;
                        continue;
                    }
                }
                s = b;
                x = x_new;
                continue;
            }
            let g0 = sys.g(&x);
            let g1 = sys.g(&x_new);
            let started_on = g0.abs() <= sys.surface_tol(&x);
            let crossed = !started_on && (g0 * g1 < 0.0 || g1.abs() <= sys.surface_tol(&x_new));
            if !crossed {
                s = b;
                x = x_new;
                continue;
            }
            let side = g0 > 0.0;
            let (tau, xt) = bisect(&field, s, &x, h, cfg.event_tol, |y, _| {
                let gy = sys.g(y);
                (gy > 0.0) != side || gy.abs() <= sys.surface_tol(y)
            });
            if tau >= b - t_tol && g1.abs() <= sys.surface_tol(&x_new) {
                // landed on the surface exactly at the grid point
                s = b;
                x = x_new;
                continue;
            }
            match selection {
                FilippovSelection::LatchedPerArc => {
                    let v = region_field(sys, region, tau, &xt, &uk)?;
                    if tau < b - t_tol && g0 * g1 < 0.0 {
                        rec.push(tau, xt.clone(), region, uk.clone(), v);
                        rec.event(tau, EventKind::GuardCross, region, region, xt.clone(), xt.clone())?;
                        s = tau;
                        x = xt;
                    } else {
                        s = b;
                        x = x_new;
                    }
                }
                FilippovSelection::Strict => {
                    let xs = project(sys, &xt);
                    let next = strict_region_on_surface(sys, tau, &xs, &uk)?;
                    let (next, xs) = if next == region {
                        // transversal approach from the side the field points to: pass through
                        (if side { LOWER } else { UPPER }, xt.clone())
                    } else {
                        (next, xs)
                    };
                    let tau = if tau >= b - t_tol { b } else { tau };
                    let v = region_field(sys, next, tau, &xs, &uk)?;
                    if tau == b {
                        rec.push(b, xs.clone(), next, uk.clone(), v);
                        pushed_end = true;
                    } else if tau <= s + t_tol {
                        let last = rec.tr.len() - 1;
                        rec.tr.modes[last] = next;
                        rec.derivs[last] = v;
                    } else {
                        rec.push(tau, xs.clone(), next, uk.clone(), v);
                    }
                    rec.event(tau, region_kind(region, next), region, next, xt.clone(), xs.clone())?;
                    region = next;
                    s = tau.max(s);
                    x = xs;
                }
            }
        }
        if !pushed_end {
            let v = region_field(sys, region, b, &x, &uk)?;
            rec.push(b, x.clone(), region, uk, v);
        }
    }
    let mut tr = rec.tr;
    tr.derivatives = Some(rec.derivs);
    tr.validate()?;
    Ok(tr)
}

/// Shortest prefix `[s, s + τ]` of an RK4 step after which `crossed` holds,
/// to within `tol`. Returns the time and state at the right end.
pub(crate) fn bisect<F, P>(field: &F, s: f64, x: &DVector<f64>, h: f64, tol: f64, crossed: P) -> (f64, DVector<f64>)
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
    P: Fn(&DVector<f64>, f64) -> bool,
{
    let (mut lo, mut hi) = (0.0, h);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if crossed(&rk4_step(field, s, x, mid), s + mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (s + hi, rk4_step(field, s, x, hi))
}
