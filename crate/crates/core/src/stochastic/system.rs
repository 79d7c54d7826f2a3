use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::{time_grid, ControlSetSpec, ControlSystem, Event, EventKind, EventPayload, FieldFn, JacobianFn, ModeDynamics, Trajectory};
use crate::error::{config, Error, Result};
use crate::nonsmooth::{Crossing, GradFn, ScalarFn};

/// `σ(t, x, u)` as an `n × d` matrix.
pub type DiffusionFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// `∂σ_{·j}/∂x` for every noise channel `j`.
pub type DiffusionJacobianFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;
/// Rate matrix `λ_ij(t, x, u)`; the diagonal is ignored.
pub type IntensityFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
pub struct StochasticMode {
    pub name: String,
    pub drift: FieldFn,
    pub drift_x: JacobianFn,
    /// `∂f/∂u`, `n × m`.
    pub drift_u: JacobianFn,
    pub diffusion: DiffusionFn,
    pub diffusion_x: DiffusionJacobianFn,
    pub control_set: ControlSetSpec,
}

impl std::fmt::Debug for StochasticMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StochasticMode").field("name", &self.name).field("control_set", &self.control_set).finish()
    }
}

/// Threshold edge with identity reset.
#[derive(Clone)]
pub struct ThresholdEdge {
    pub from: usize,
    pub to: usize,
    pub guard: ScalarFn,
    pub guard_grad: GradFn,
    pub crossing: Crossing,
}

impl std::fmt::Debug for ThresholdEdge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ThresholdEdge").field("from", &self.from).field("to", &self.to).field("crossing", &self.crossing).finish()
    }
}

#[derive(Clone, Default)]
pub enum Switching {
    #[default]
    None,
    Threshold(Vec<ThresholdEdge>),
    Intensity(IntensityFn),
}

impl std::fmt::Debug for Switching {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::None => write!(f, "None"),
            Self::Threshold(e) => f.debug_tuple("Threshold").field(e).finish(),
            Self::Intensity(_) => write!(f, "Intensity(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StochasticHybridSystem {
    pub state_dim: usize,
    pub noise_dim: usize,
    pub modes: Vec<StochasticMode>,
    pub switching: Switching,
    pub time_horizon: (f64, f64),
}

impl StochasticHybridSystem {
    pub fn new(state_dim: usize, noise_dim: usize, modes: Vec<StochasticMode>, switching: Switching, time_horizon: (f64, f64)) -> Result<Self> {
        if modes.is_empty() || state_dim == 0 || noise_dim == 0 {
            return config("stochastic system needs at least one mode, state and noise dimension");
        }
        if !(time_horizon.1 > time_horizon.0) {
            return config("time horizon must be increasing");
        }
        let x = DVector::from_element(state_dim, 0.5);
        let t = time_horizon.0;
        for m in &modes {
            let u = probe_control(&m.control_set);
            let m_dim = u.len();
            if m.drift.as_ref()(t, &x, &u).len() != state_dim {
                return config(format!("mode '{}': drift has the wrong dimension", m.name));
            }
            let s = (m.diffusion)(t, &x, &u);
            if s.nrows() != state_dim || s.ncols() != noise_dim {
                return config(format!("mode '{}': diffusion must be {state_dim}x{noise_dim}, got {}x{}", m.name, s.nrows(), s.ncols()));
            }
            let du = (m.drift_u)(t, &x, &u);
            if du.nrows() != state_dim || du.ncols() != m_dim {
                return config(format!("mode '{}': drift_u has the wrong shape", m.name));
            }
            let sx = (m.diffusion_x)(t, &x, &u);
            if sx.len() != noise_dim || sx.iter().any(|j| j.nrows() != state_dim || j.ncols() != state_dim) {
                return config(format!("mode '{}': diffusion_x has the wrong shape", m.name));
            }
        }
        match &switching {
            Switching::Threshold(edges) => {
                if edges.iter().any(|e| e.from >= modes.len() || e.to >= modes.len()) {
                    return config("threshold edge references an unknown mode");
                }
            }
            Switching::Intensity(rates) => {
                let u = probe_control(&modes[0].control_set);
                let r = rates(t, &x, &u);
                if r.nrows() != modes.len() || r.ncols() != modes.len() {
                    return config("intensity matrix must be square in the number of modes");
                }
            }
            Switching::None => {}
        }
        Ok(Self { state_dim, noise_dim, modes, switching, time_horizon })
    }

    pub fn mode(&self, q: usize) -> Result<&StochasticMode> {
        self.modes.get(q).ok_or_else(|| Error::Config(format!("mode {q} out of range ({} modes)", self.modes.len())))
    }

    /// The drift as a deterministic control system (noise and switching dropped).
    pub fn drift_system(&self) -> Result<ControlSystem> {
        let modes = self
            .modes
            .iter()
            .map(|m| {
                let f = m.drift.clone();
                let j = m.drift_x.clone();
                ModeDynamics::new(m.name.clone(), m.control_set.clone(), move |t: f64, x: &DVector<f64>, u: &DVector<f64>| f(t, x, u), move |t: f64, x: &DVector<f64>, u: &DVector<f64>| j(t, x, u))
            })
            .collect();
        ControlSystem::new(self.state_dim, modes, self.time_horizon)
    }

    pub fn edge_count(&self) -> usize {
        match &self.switching {
            Switching::Threshold(e) => e.len(),
            _ => 0,
        }
    }
}

fn probe_control(set: &ControlSetSpec) -> DVector<f64> {
    match set {
        ControlSetSpec::FiniteSet(p) => p[0].clone(),
        ControlSetSpec::Interval { lo, hi } => DVector::from_element(1, 0.5 * (lo + hi)),
        ControlSetSpec::Box { lo, hi } => (lo + hi) * 0.5,
        ControlSetSpec::Sphere { dim, .. } => DVector::zeros(*dim),
    }
}

/// Feedback or open-loop control for path simulation.
pub trait StochasticControl: Sync {
    fn value(&self, t: f64, x: &DVector<f64>, mode: usize) -> DVector<f64>;
}

pub struct FeedbackFn<F>(pub F);

impl<F: Fn(f64, &DVector<f64>, usize) -> DVector<f64> + Sync> StochasticControl for FeedbackFn<F> {
    fn value(&self, t: f64, x: &DVector<f64>, mode: usize) -> DVector<f64> {
        (self.0)(t, x, mode)
    }
}

/// Open-loop signal, ignoring state and mode.
pub struct OpenLoop<'a>(pub &'a dyn crate::dynamics::ControlSignal);

impl StochasticControl for OpenLoop<'_> {
    fn value(&self, t: f64, _x: &DVector<f64>, _mode: usize) -> DVector<f64> {
        self.0.value(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl EnsembleConfig {
    pub fn new(n_paths: usize, seed: u64, dt: f64) -> Self {
        Self { n_paths, seed, dt, workers: None }
    }

    pub fn with_workers(mut self, w: usize) -> Self {
        self.workers = Some(w);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return config("n_paths must be at least 1");
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return config("dt must be positive");
        }
        if self.workers == Some(0) {
            return config("workers must be at least 1");
        }
        Ok(())
    }

    pub(crate) fn install<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T> {
        match self.workers {
            None => Ok(job()),
            Some(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
                Ok(pool.install(job))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub seed: u64,
    pub n_paths: usize,
    pub dt: f64,
    /// Paths that stayed finite, in index order.
    pub paths: Vec<Trajectory>,
    pub path_indices: Vec<usize>,
    pub diverged: Vec<usize>,
}

/// One step of a path, as seen by a consumer.
pub(crate) struct StepView<'a> {
    pub t: f64,
    pub x: &'a DVector<f64>,
    pub mode: usize,
    pub u: &'a DVector<f64>,
}

pub(crate) struct Diverged;

/// Per-path random stream keyed by `(seed, path)`.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Euler–Maruyama path; `visit` sees every grid sample and `on_event`
/// every switch (recorded against the next grid index).
pub(crate) fn run_path(
    sys: &StochasticHybridSystem,
    control: &dyn StochasticControl,
    x0: &DVector<f64>,
    q0: usize,
    grid: &[f64],
    seed: u64,
    path: usize,
    visit: &mut dyn FnMut(StepView<'_>),
    on_event: &mut dyn FnMut(Event),
) -> std::result::Result<(), Diverged> {
    let mut rng = path_rng(seed, path);
    let mut x = x0.clone();
    let mut q = q0;
    let d = sys.noise_dim;
    let n_modes = sys.modes.len();
    let mut dw = DVector::zeros(d);
    for k in 0..grid.len() {
        let t = grid[k];
        let u = control.value(t, &x, q);
        visit(StepView { t, x: &x, mode: q, u: &u });
        if k + 1 == grid.len() {
            break;
        }
        let h = grid[k + 1] - t;
        let sq = h.sqrt();
        for w in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = z * sq;
        }
        let m = &sys.modes[q];
        let x_next = &x + m.drift.as_ref()(t, &x, &u) * h + (m.diffusion)(t, &x, &u) * &dw;
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(Diverged);
        }
        match &sys.switching {
            Switching::None => {}
            Switching::Threshold(edges) => {
                let mut best: Option<(f64, usize)> = None;
                for (i, e) in edges.iter().enumerate().filter(|(_, e)| e.from == q) {
                    let (h0, h1) = ((e.guard)(&x), (e.guard)(&x_next));
                    if e.crossing.fired(h0, h1) {
                        let theta = if h0 == h1 { 1.0 } else { (h0 / (h0 - h1)).clamp(0.0, 1.0) };
                        if best.is_none_or(|(b, _)| theta < b) {
                            best = Some((theta, i));
                        }
                    }
                }
                if let Some((theta, i)) = best {
                    let e = &edges[i];
                    let xs = &x + (&x_next - &x) * theta;
                    on_event(Event {
                        time: t + theta * h,
                        kind: EventKind::ModeSwitch,
                        index: k + 1,
                        payload: EventPayload { edge: Some(i), from_mode: q, to_mode: e.to, state_before: xs.clone(), state_after: xs },
                    });
                    q = e.to;
                }
            }
            Switching::Intensity(rates) => {
                let r = rates(t, &x, &u);
                let mut next = None;
                for j in 0..n_modes {
                    let v: f64 = rng.random();
                    if j != q && next.is_none() && v < (r[(q, j)].max(0.0) * h).min(1.0) {
                        next = Some(j);
                    }
                }
                if let Some(j) = next {
                    on_event(Event {
                        time: grid[k + 1],
                        kind: EventKind::ModeSwitch,
                        index: k + 1,
                        payload: EventPayload { edge: None, from_mode: q, to_mode: j, state_before: x_next.clone(), state_after: x_next.clone() },
                    });
                    q = j;
                }
            }
        }
        x = x_next;
    }
    Ok(())
}

pub(crate) fn check_start(sys: &StochasticHybridSystem, x0: &DVector<f64>, q0: usize, span: (f64, f64)) -> Result<()> {
    if x0.len() != sys.state_dim {
        return config(format!("initial state has {} entries, expected {}", x0.len(), sys.state_dim));
    }
    sys.mode(q0)?;
    if !(span.1 > span.0) {
        return config("time span must be increasing");
    }
    Ok(())
}

pub fn simulate_paths(
    sys: &StochasticHybridSystem,
    control: &dyn StochasticControl,
    x0: &DVector<f64>,
    q0: usize,
    span: (f64, f64),
    cfg: &EnsembleConfig,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    check_start(sys, x0, q0, span)?;
    let grid = time_grid(span, cfg.dt, &[]);
    let results: Vec<Option<Trajectory>> = cfg.install(|| {
        (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| {
                let mut tr = Trajectory::default();
                let mut events = Vec::new();
                let ok = run_path(
                    sys,
                    control,
                    x0,
                    q0,
                    &grid,
                    cfg.seed,
                    i,
                    &mut |s| {
                        tr.times.push(s.t);
                        tr.states.push(s.x.clone());
                        tr.modes.push(s.mode);
                        tr.controls.push(s.u.clone());
                    },
                    &mut |e| events.push(e),
                );
                ok.ok().map(|_| {
                    tr.events = events;
                    tr
                })
            })
            .collect()
    })?;
    let mut ens = PathEnsemble { seed: cfg.seed, n_paths: cfg.n_paths, dt: cfg.dt, paths: vec![], path_indices: vec![], diverged: vec![] };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Some(tr) => {
                ens.paths.push(tr);
                ens.path_indices.push(i);
            }
            None => ens.diverged.push(i),
        }
    }
    Ok(ens)
}
