use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::system::{check_start, run_path, EnsembleConfig, StochasticControl, StochasticHybridSystem};
use crate::dynamics::time_grid;
use crate::error::{config, Error, Result};

pub type TerminalFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type TerminalGradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type TerminalHessFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type RunningFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
pub type RunningGradFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type RunningHessFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// `E[φ(x(T)) + ∫ L(t, x, u) dt]` with the derivatives the adjoints need.
#[derive(Clone)]
pub struct CostSpec {
    pub terminal: TerminalFn,
    pub terminal_grad: TerminalGradFn,
    pub terminal_hess: TerminalHessFn,
    pub running: RunningFn,
    pub running_x: RunningGradFn,
    pub running_u: RunningGradFn,
    pub running_xx: RunningHessFn,
    /// Control-effort weight `λ`.
    pub lambda_weight: f64,
}

impl std::fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CostSpec").field("lambda_weight", &self.lambda_weight).finish()
    }
}

impl CostSpec {
    /// `‖x(T) − x_d‖² + λ∫‖u‖² dt`.
    pub fn quadratic_tracking(x_d: DVector<f64>, lambda_weight: f64) -> Result<Self> {
        if !(lambda_weight >= 0.0) || !lambda_weight.is_finite() {
            return config("lambda weight must be nonnegative");
        }
        let n = x_d.len();
        let (a, b) = (x_d.clone(), x_d);
        Ok(Self {
            terminal: Arc::new(move |x| (x - &a).norm_squared()),
            terminal_grad: Arc::new(move |x| (x - &b) * 2.0),
            terminal_hess: Arc::new(move |_| DMatrix::identity(n, n) * 2.0),
            running: Arc::new(move |_, _, u| lambda_weight * u.norm_squared()),
            running_x: Arc::new(move |_, x, _| DVector::zeros(x.len())),
            running_u: Arc::new(move |_, _, u| u * (2.0 * lambda_weight)),
            running_xx: Arc::new(move |_, x, _| DMatrix::zeros(x.len(), x.len())),
            lambda_weight,
        })
    }

    /// Worst relative mismatch between the supplied derivatives and central
    /// differences over `probes` of `(t, x, u)`.
    pub fn derivative_self_test(&self, probes: &[(f64, DVector<f64>, DVector<f64>)]) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / 1f64.max(a.abs()).max(b.abs());
        let mut worst: f64 = 0.0;
        for (t, x, u) in probes {
            let g = (self.terminal_grad)(x);
            let h = (self.terminal_hess)(x);
            let lx = (self.running_x)(*t, x, u);
            let lu = (self.running_u)(*t, x, u);
            let lxx = (self.running_xx)(*t, x, u);
            for i in 0..x.len() {
                let s = 1e-6 * (1.0 + x[i].abs());
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += s;
                xm[i] -= s;
                worst = worst.max(rel(g[i], ((self.terminal)(&xp) - (self.terminal)(&xm)) / (2.0 * s)));
                worst = worst.max(rel(lx[i], ((self.running)(*t, &xp, u) - (self.running)(*t, &xm, u)) / (2.0 * s)));
                let dg = ((self.terminal_grad)(&xp) - (self.terminal_grad)(&xm)) / (2.0 * s);
                let dl = ((self.running_x)(*t, &xp, u) - (self.running_x)(*t, &xm, u)) / (2.0 * s);
                for j in 0..x.len() {
                    worst = worst.max(rel(h[(j, i)], dg[j])).max(rel(lxx[(j, i)], dl[j]));
                }
            }
            for i in 0..u.len() {
                let s = 1e-6 * (1.0 + u[i].abs());
                let (mut up, mut um) = (u.clone(), u.clone());
                up[i] += s;
                um[i] -= s;
                worst = worst.max(rel(lu[i], ((self.running)(*t, x, &up) - (self.running)(*t, x, &um)) / (2.0 * s)));
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_used: usize,
    pub n_diverged: usize,
}

/// Trapezoidal running cost plus terminal cost along one path.
fn path_cost(
    sys: &StochasticHybridSystem,
    control: &dyn StochasticControl,
    cost: &CostSpec,
    x0: &DVector<f64>,
    q0: usize,
    grid: &[f64],
    seed: u64,
    path: usize,
) -> Option<f64> {
    let mut acc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    let mut last = None;
    let ok = run_path(
        sys,
        control,
        x0,
        q0,
        grid,
        seed,
        path,
        &mut |s| {
            let l = (cost.running)(s.t, s.x, s.u);
            if let Some((tp, lp)) = prev {
                acc += 0.5 * (s.t - tp) * (lp + l);
            }
            prev = Some((s.t, l));
            if s.t == grid[grid.len() - 1] {
                last = Some(s.x.clone());
            }
        },
        &mut |_| {},
    );
    ok.ok()?;
    let v = acc + (cost.terminal)(&last?);
    v.is_finite().then_some(v)
}

fn summarise(values: &[f64], n_diverged: usize) -> Result<CostEstimate> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Estimation("every path diverged".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std_error = if n > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(CostEstimate { mean, std_error, n_used: n, n_diverged })
}

/// Monte Carlo cost estimate; paths run in parallel and are summed in index
/// order, so the result does not depend on the worker count.
pub fn monte_carlo_cost(
    sys: &StochasticHybridSystem,
    control: &dyn StochasticControl,
    cost: &CostSpec,
    x0: &DVector<f64>,
    q0: usize,
    span: (f64, f64),
    cfg: &EnsembleConfig,
) -> Result<CostEstimate> {
    cfg.validate()?;
    if cfg.n_paths < 2 {
        return config("Monte Carlo needs at least 2 paths");
    }
    check_start(sys, x0, q0, span)?;
    let grid = time_grid(span, cfg.dt, &[]);
    let costs: Vec<Option<f64>> =
        cfg.install(|| (0..cfg.n_paths).into_par_iter().map(|i| path_cost(sys, control, cost, x0, q0, &grid, cfg.seed, i)).collect())?;
    let n_div = costs.iter().filter(|c| c.is_none()).count();
    let values: Vec<f64> = costs.into_iter().flatten().collect();
    summarise(&values, n_div)
}

/// `project(base + ε·direction)` onto the control set of the current mode.
pub struct PerturbedControl<'a> {
    pub sys: &'a StochasticHybridSystem,
    pub base: &'a dyn StochasticControl,
    pub direction: &'a dyn StochasticControl,
    pub epsilon: f64,
}

impl StochasticControl for PerturbedControl<'_> {
    fn value(&self, t: f64, x: &DVector<f64>, mode: usize) -> DVector<f64> {
        let u = self.base.value(t, x, mode) + self.direction.value(t, x, mode) * self.epsilon;
        self.sys.modes[mode].control_set.project(&u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationRow {
    pub epsilon: f64,
    pub delta_j: f64,
    pub std_error: f64,
    pub n_pairs: usize,
}

/// Paired estimate of `J(u^ε) − J(û)` using common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn variation_cost_test(
    sys: &StochasticHybridSystem,
    base: &dyn StochasticControl,
    direction: &dyn StochasticControl,
    epsilons: &[f64],
    cost: &CostSpec,
    x0: &DVector<f64>,
    q0: usize,
    span: (f64, f64),
    cfg: &EnsembleConfig,
) -> Result<Vec<VariationRow>> {
    cfg.validate()?;
    check_start(sys, x0, q0, span)?;
    let grid = time_grid(span, cfg.dt, &[]);
    let base_costs: Vec<Option<f64>> =
        cfg.install(|| (0..cfg.n_paths).into_par_iter().map(|i| path_cost(sys, base, cost, x0, q0, &grid, cfg.seed, i)).collect())?;
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let pert = PerturbedControl { sys, base, direction, epsilon: eps };
        let diffs: Vec<Option<f64>> = cfg.install(|| {
            (0..cfg.n_paths)
                .into_par_iter()
                .map(|i| Some(path_cost(sys, &pert, cost, x0, q0, &grid, cfg.seed, i)? - base_costs[i]?))
                .collect()
        })?;
        let n_div = diffs.iter().filter(|c| c.is_none()).count();
        let values: Vec<f64> = diffs.into_iter().flatten().collect();
        let est = summarise(&values, n_div)?;
        rows.push(VariationRow { epsilon: eps, delta_j: est.mean, std_error: est.std_error, n_pairs: est.n_used });
    }
    Ok(rows)
}
