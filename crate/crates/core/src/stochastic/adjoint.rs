use nalgebra::{DMatrix, DVector};

use super::cost::CostSpec;
use super::system::{PathEnsemble, StochasticControl, StochasticHybridSystem, Switching};
use crate::dynamics::{rk4_step, time_grid, Trajectory};
use crate::error::{config, Error, Result};
use crate::linalg::symmetry_defect;
use crate::report::{CertificateReport, StochasticResiduals};

/// `⟨ψ, f_q⟩ + ½ tr(σ_qᵀ Ψ σ_q)`.
pub fn stochastic_hamiltonian(
    sys: &StochasticHybridSystem,
    mode: usize,
    t: f64,
    x: &DVector<f64>,
    psi: &DVector<f64>,
    psi_matrix: &DMatrix<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    let n = sys.state_dim;
    if x.len() != n || psi.len() != n || psi_matrix.nrows() != n || psi_matrix.ncols() != n {
        return config(format!("stochastic Hamiltonian expects dimension {n}"));
    }
    if symmetry_defect(psi_matrix) > 1e-12 * (1.0 + psi_matrix.amax()) {
        return config("second adjoint must be symmetric");
    }
    let m = sys.mode(mode)?;
    if u.len() != m.control_set.dimension() {
        return config("control has the wrong dimension");
    }
    let s = (m.diffusion)(t, x, u);
    Ok(psi.dot(&m.drift.as_ref()(t, x, u)) + 0.5 * (s.transpose() * psi_matrix * &s).trace())
}

/// State about which the adjoint coefficients are frozen.
#[derive(Debug, Clone)]
pub enum Linearization {
    Constant(DVector<f64>),
    Nominal(Trajectory),
}

impl Linearization {
    fn at(&self, t: f64) -> DVector<f64> {
        match self {
            Self::Constant(x) => x.clone(),
            Self::Nominal(tr) => tr.sample(t),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModeSchedule {
    Constant(usize),
    /// Mode labels of a nominal path, right-continuous.
    Nominal(Trajectory),
}

impl ModeSchedule {
    fn at(&self, t: f64) -> usize {
        match self {
            Self::Constant(q) => *q,
            Self::Nominal(tr) => {
                let k = tr.times.partition_point(|&s| s <= t).saturating_sub(1);
                tr.modes[k]
            }
        }
    }
}

/// Piecewise-constant jump multiplier process for one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaProcess {
    /// Strictly increasing start times; `values[i]` holds from `breaks[i]`.
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl GammaProcess {
    pub fn zero() -> Self {
        Self { breaks: vec![f64::NEG_INFINITY], values: vec![0.0] }
    }

    pub fn constant(v: f64) -> Self {
        Self { breaks: vec![f64::NEG_INFINITY], values: vec![v] }
    }

    pub fn value(&self, t: f64) -> f64 {
        let k = self.breaks.partition_point(|&s| s <= t).saturating_sub(1);
        self.values[k]
    }

    fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct ReductionConfig {
    pub dt: f64,
    pub linearization: Linearization,
    pub modes: ModeSchedule,
    /// Control at which coefficients are evaluated; zeros when `None`.
    pub nominal_control: Option<DVector<f64>>,
    /// Adds `f_xᵀΨ + Ψf_x` to the `Ψ` equation.
    pub include_drift_curvature: bool,
    /// Terminal state for `ψ(T) = φ_x`, `Ψ(T) = φ_xx`; defaults to the
    /// linearisation point at `T`.
    pub terminal_state: Option<DVector<f64>>,
    /// Only `false` is supported.
    pub nonzero_martingale_integrands: bool,
    pub gamma: Vec<GammaProcess>,
}

impl ReductionConfig {
    pub fn new(dt: f64, linearization: Linearization, modes: ModeSchedule) -> Self {
        Self {
            dt,
            linearization,
            modes,
            nominal_control: None,
            include_drift_curvature: false,
            terminal_state: None,
            nonzero_martingale_integrands: false,
            gamma: vec![],
        }
    }
}

/// Deterministic-coefficient adjoint triple `(ψ, Ψ, γ)` on a time grid,
/// together with the data it was linearised about.
#[derive(Debug, Clone)]
pub struct StochasticCandidate {
    pub times: Vec<f64>,
    pub psi: Vec<DVector<f64>>,
    pub psi_matrix: Vec<DMatrix<f64>>,
    /// One process per threshold edge.
    pub gamma: Vec<GammaProcess>,
    pub linearization: Vec<DVector<f64>>,
    pub modes: Vec<usize>,
    pub nominal_control: Vec<DVector<f64>>,
    pub include_drift_curvature: bool,
    pub terminal_state: DVector<f64>,
}

impl StochasticCandidate {
    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.psi.len() != n || self.psi_matrix.len() != n || self.linearization.len() != n || self.modes.len() != n || self.nominal_control.len() != n {
            return config("candidate series lengths disagree with its grid");
        }
        if self.psi_matrix.iter().any(|p| symmetry_defect(p) > 1e-12 * (1.0 + p.amax())) {
            return Err(Error::Invariant("second adjoint is not symmetric".into()));
        }
        if self.gamma.iter().any(|g| g.values.iter().any(|v| !v.is_finite()) || g.breaks.len() != g.values.len()) {
            return config("jump multipliers must be finite");
        }
        Ok(())
    }

    /// Linear interpolation of `ψ` on the grid.
    pub fn psi_at(&self, t: f64) -> DVector<f64> {
        let k = self.times.partition_point(|&s| s <= t).saturating_sub(1).min(self.times.len() - 1);
        if k + 1 == self.times.len() {
            return self.psi[k].clone();
        }
        let th = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        &self.psi[k] + (&self.psi[k + 1] - &self.psi[k]) * th
    }
}

/// Right-hand side of the reduced adjoint system packed as `(ψ, vec Ψ)`.
fn reduced_rhs(sys: &StochasticHybridSystem, cost: &CostSpec, q: usize, t: f64, xl: &DVector<f64>, ul: &DVector<f64>, drift_curv: bool, z: &DVector<f64>) -> DVector<f64> {
    let n = sys.state_dim;
    let m = &sys.modes[q];
    let psi = z.rows(0, n).into_owned();
    let pm = DMatrix::from_column_slice(n, n, &z.as_slice()[n..]);
    let fx = (m.drift_x)(t, xl, ul);
    let sx = (m.diffusion_x)(t, xl, ul);
    let s = (m.diffusion)(t, xl, ul);
    let mut dpm = -(cost.running_xx)(t, xl, ul);
    let mut dpsi = -(fx.tr_mul(&psi) + (cost.running_x)(t, xl, ul));
    for (j, sj) in sx.iter().enumerate() {
        dpm -= sj.transpose() * &pm * sj;
        dpsi -= sj.transpose() * (&pm * s.column(j));
    }
    if drift_curv {
        dpm -= fx.transpose() * &pm + &pm * &fx;
    }
    let mut out = DVector::zeros(n + n * n);
    out.rows_mut(0, n).copy_from(&dpsi);
    out.rows_mut(n, n * n).copy_from_slice(dpm.as_slice());
    out
}

fn pack(psi: &DVector<f64>, pm: &DMatrix<f64>) -> DVector<f64> {
    let n = psi.len();
    let mut z = DVector::zeros(n + n * n);
    z.rows_mut(0, n).copy_from(psi);
    z.rows_mut(n, n * n).copy_from_slice(pm.as_slice());
    z
}

fn unpack(z: &DVector<f64>, n: usize) -> (DVector<f64>, DMatrix<f64>) {
    let pm = DMatrix::from_column_slice(n, n, &z.as_slice()[n..]);
    (z.rows(0, n).into_owned(), (&pm + pm.transpose()) * 0.5)
}

/// Backward RK4 step of the reduced system over `[t_k, t_{k+1}]`.
fn back_step(sys: &StochasticHybridSystem, cost: &CostSpec, cand_like: (&[f64], &[DVector<f64>], &[usize], &[DVector<f64>]), drift_curv: bool, lin: &dyn Fn(f64) -> DVector<f64>, k: usize, z1: &DVector<f64>) -> DVector<f64> {
    let (times, _, modes, ul) = cand_like;
    let q = modes[k];
    let u = &ul[k];
    let f = |t: f64, z: &DVector<f64>| reduced_rhs(sys, cost, q, t, &lin(t), u, drift_curv, z);
    rk4_step(&f, times[k + 1], z1, -(times[k + 1] - times[k]))
}

/// Backward integration of the `Γ = Θ = 0` reduction of the adjoint
/// equations with terminal data `ψ(T) = φ_x`, `Ψ(T) = φ_xx`.
pub fn reduced_adjoint_propagate(
    sys: &StochasticHybridSystem,
    span: (f64, f64),
    cost: &CostSpec,
    cfg: &ReductionConfig,
) -> Result<StochasticCandidate> {
    if cfg.nonzero_martingale_integrands {
        return Err(Error::Capability("only the zero-martingale-integrand reduction is supported".into()));
    }
    if !(cfg.dt > 0.0) || !(span.1 > span.0) {
        return config("reduction needs dt > 0 and an increasing span");
    }
    let n = sys.state_dim;
    let edges = sys.edge_count();
    let gamma = if cfg.gamma.is_empty() { vec![GammaProcess::zero(); edges] } else { cfg.gamma.clone() };
    if gamma.len() != edges {
        return config(format!("{} jump multiplier processes for {edges} edges", gamma.len()));
    }
    let times = time_grid(span, cfg.dt, &[]);
    let lin_at = |t: f64| cfg.linearization.at(t);
    let linearization: Vec<DVector<f64>> = times.iter().map(|&t| lin_at(t)).collect();
    if linearization.iter().any(|x| x.len() != n) {
        return config("linearisation state has the wrong dimension");
    }
    let modes: Vec<usize> = times.iter().map(|&t| cfg.modes.at(t)).collect();
    for &q in &modes {
        sys.mode(q)?;
    }
    let nominal_control: Vec<DVector<f64>> = modes
        .iter()
        .map(|&q| cfg.nominal_control.clone().unwrap_or_else(|| DVector::zeros(sys.modes[q].control_set.dimension())))
        .collect();
    let xt = cfg.terminal_state.clone().unwrap_or_else(|| linearization[times.len() - 1].clone());
    if xt.len() != n {
        return config("terminal state has the wrong dimension");
    }
    let nt = times.len();
    let mut psi = vec![DVector::zeros(n); nt];
    let mut pm = vec![DMatrix::zeros(n, n); nt];
    psi[nt - 1] = (cost.terminal_grad)(&xt);
    pm[nt - 1] = (cost.terminal_hess)(&xt);
    let mut z = pack(&psi[nt - 1], &pm[nt - 1]);
    for k in (0..nt - 1).rev() {
        z = back_step(sys, cost, (&times, &linearization, &modes, &nominal_control), cfg.include_drift_curvature, &lin_at, k, &z);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { time: times[k], detail: "non-finite adjoint".into() });
        }
        let (p, m) = unpack(&z, n);
        psi[k] = p;
        pm[k] = m;
    }
    Ok(StochasticCandidate {
        times,
        psi,
        psi_matrix: pm,
        gamma,
        linearization,
        modes,
        nominal_control,
        include_drift_curvature: cfg.include_drift_curvature,
        terminal_state: xt,
    })
}

/// `clamp(−α ψ / (2λ), lo, hi)` and whether the clamp is active. An
/// interior value landing exactly on a bound counts as inactive.
pub fn feedback_control_law(alpha: f64, lambda_weight: f64, psi: f64, bounds: (f64, f64)) -> (f64, bool) {
    let interior = -alpha * psi / (2.0 * lambda_weight);
    if interior < bounds.0 {
        (bounds.0, true)
    } else if interior > bounds.1 {
        (bounds.1, true)
    } else {
        (interior + 0.0, false)
    }
}

/// Mode-dependent clamped law driven by a candidate's `ψ`.
pub struct ClampedFeedback<'a> {
    pub candidate: &'a StochasticCandidate,
    /// Control gain `α_q` per mode.
    pub alphas: Vec<f64>,
    pub lambda_weight: f64,
    pub bounds: (f64, f64),
}

impl StochasticControl for ClampedFeedback<'_> {
    fn value(&self, t: f64, _x: &DVector<f64>, mode: usize) -> DVector<f64> {
        let psi = self.candidate.psi_at(t)[0];
        DVector::from_element(1, feedback_control_law(self.alphas[mode], self.lambda_weight, psi, self.bounds).0)
    }
}

/// Pathwise check of a reduced candidate on an ensemble. The conditional
/// expectations of the maximum condition are replaced by ensemble means of
/// the stationarity defect `‖f_uᵀψ + L_u‖∞`, which is exact when the
/// adjoints are deterministic.
pub fn check_stochastic_candidate(
    sys: &StochasticHybridSystem,
    ensemble: &PathEnsemble,
    cand: &StochasticCandidate,
    cost: &CostSpec,
    tol: f64,
) -> Result<CertificateReport> {
    cand.validate()?;
    let n = sys.state_dim;
    let nt = cand.times.len();
    if ensemble.paths.is_empty() {
        return Err(Error::Estimation("ensemble has no finite paths".into()));
    }
    for p in &ensemble.paths {
        if p.len() != nt || p.times.iter().zip(&cand.times).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs())) {
            return config("candidate grid does not match the ensemble grid");
        }
    }
    if cand.gamma.len() != sys.edge_count() {
        return config("one jump multiplier process per threshold edge is required");
    }
    let mut rep = CertificateReport::new(tol);

    let lin = |t: f64| {
        let k = cand.times.partition_point(|&s| s <= t).saturating_sub(1).min(nt - 1);
        if k + 1 == nt {
            return cand.linearization[k].clone();
        }
        let th = (t - cand.times[k]) / (cand.times[k + 1] - cand.times[k]);
        &cand.linearization[k] + (&cand.linearization[k + 1] - &cand.linearization[k]) * th
    };
    let mut defect: f64 = 0.0;
    for k in 0..nt - 1 {
        let z = back_step(sys, cost, (&cand.times, &cand.linearization, &cand.modes, &cand.nominal_control), cand.include_drift_curvature, &lin, k, &pack(&cand.psi[k + 1], &cand.psi_matrix[k + 1]));
        let (p, m) = unpack(&z, n);
        let h = cand.times[k + 1] - cand.times[k];
        defect = defect.max((&p - &cand.psi[k]).amax() / h).max((&m - &cand.psi_matrix[k]).amax() / h);
    }
    rep.adjoint_residual = defect;

    let mut gap_series = vec![0.0; nt];
    for p in &ensemble.paths {
        for k in 0..nt {
            let m = &sys.modes[p.modes[k]];
            let (t, x, u) = (p.times[k], &p.states[k], &p.controls[k]);
            let g = ((m.drift_u)(t, x, u).tr_mul(&cand.psi[k]) + (cost.running_u)(t, x, u)).amax();
            gap_series[k] += g;
        }
    }
    let np = ensemble.paths.len() as f64;
    for g in &mut gap_series {
        *g /= np;
    }
    let (kmax, gmax) = gap_series.iter().enumerate().fold((0, 0.0), |(bk, bg), (k, &g)| if g > bg { (k, g) } else { (bk, bg) });
    rep.max_gap = gmax;
    rep.max_gap_time = cand.times[kmax];

    let mut jump_residuals = Vec::new();
    if let Switching::Threshold(edges) = &sys.switching {
        for p in &ensemble.paths {
            for e in &p.events {
                let Some(i) = e.payload.edge else { continue };
                let before = cand.psi_at(e.time);
                let after = before.clone();
                let grad = (edges[i].guard_grad)(&e.payload.state_before);
                let r = &before - (&after + grad * cand.gamma[i].value(e.time));
                jump_residuals.push(r.amax());
            }
        }
    }

    let xt = &cand.terminal_state;
    let terminal_psi_residual = (&cand.psi[nt - 1] - (cost.terminal_grad)(xt)).amax();
    let terminal_psi_matrix_residual = (&cand.psi_matrix[nt - 1] - (cost.terminal_hess)(xt)).amax();
    let trivial = cand.psi.iter().all(|p| p.amax() == 0.0)
        && cand.psi_matrix.iter().all(|p| p.amax() == 0.0)
        && cand.gamma.iter().all(GammaProcess::is_zero);
    rep.nontriviality_slack = if trivial { 1.0 } else { 0.0 };
    rep.stochastic = Some(StochasticResiduals { gap_series, expected_max_gap: gmax, jump_residuals, terminal_psi_residual, terminal_psi_matrix_residual });
    rep.finalize();
    Ok(rep)
}
