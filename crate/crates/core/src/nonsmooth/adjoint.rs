use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::hybrid::HybridAutomaton;
use super::surface::{filippov_set_eval, FilippovSystem, LOWER, SLIDING, UPPER};
use crate::dynamics::{averaged_jacobian, eval_convexified_drift, mode_max, EventKind, GeneralizedControl, MaxConfig, Trajectory};
use crate::error::{config, Error, Result};
use crate::first_order::{select_min, AdjointState, FirstOrderCandidate, FirstOrderReference, LinearAdjointFlow, SphereGrid};
use crate::report::{CertificateReport, JumpResiduals, Sense};

/// Jump data at one event: `ψ⁺ = J⁻ᵀ ψ⁻ + ν ∇h`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSpec {
    pub index: usize,
    pub time: f64,
    pub edge: Option<(usize, usize)>,
    /// Inverse-transpose of the reset Jacobian (identity for Filippov jumps).
    pub inv_jac_t: DMatrix<f64>,
    pub grad: DVector<f64>,
    pub condition_number: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub edge: Option<(usize, usize)>,
    pub nu: f64,
    pub psi_before: DVector<f64>,
    pub psi_after: DVector<f64>,
    pub inv_jac_t: DMatrix<f64>,
    pub grad: DVector<f64>,
}

impl JumpRecord {
    /// `‖ψ⁺ − (J⁻ᵀψ⁻ + ν∇h)‖∞`, recomputed from the stored fields.
    pub fn formula_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.psi_after.len() {
            let mut v = self.nu * self.grad[i];
            for j in 0..self.psi_before.len() {
                v += self.inv_jac_t[(i, j)] * self.psi_before[j];
            }
            worst = worst.max((self.psi_after[i] - v).abs());
        }
        worst
    }
}

/// Piecewise linear adjoint flow with jumps at recorded events.
#[derive(Debug, Clone)]
pub struct JumpAdjointFlow {
    pub times: Vec<f64>,
    arcs: Vec<(usize, usize, LinearAdjointFlow)>,
    pub jumps: Vec<JumpSpec>,
}

/// Costate with left limits at events.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpAdjointState {
    pub state: AdjointState,
    pub psi_minus: Vec<DVector<f64>>,
    pub records: Vec<JumpRecord>,
}

impl JumpAdjointFlow {
    /// `a_at(t, k)` returns the adjoint matrix on step `[t_k, t_{k+1}]`.
    pub fn new<F: Fn(f64, usize) -> Result<DMatrix<f64>>>(times: &[f64], jumps: Vec<JumpSpec>, a_at: F) -> Result<Self> {
        let n = times.len();
        let mut cuts = vec![0];
        for j in &jumps {
            if j.index == 0 || j.index >= n || j.index <= *cuts.last().unwrap() {
                return Err(Error::Jump(format!("event at t = {} has no separate grid sample", j.time)));
            }
            cuts.push(j.index);
        }
        cuts.push(n - 1);
        let mut arcs = Vec::new();
        for w in cuts.windows(2) {
            let (s, e) = (w[0], w[1]);
            if e == s {
                continue;
            }
            let flow = LinearAdjointFlow::new(&times[s..=e], |t, local| a_at(t, s + local))?;
            arcs.push((s, e, flow));
        }
        Ok(Self { times: times.to_vec(), arcs, jumps })
    }

    pub fn propagate(&self, psi0: &DVector<f64>, nus: &[f64]) -> Result<JumpAdjointState> {
        if nus.len() != self.jumps.len() {
            return config(format!("{} multipliers supplied for {} events", nus.len(), self.jumps.len()));
        }
        let n = self.times.len();
        let mut psi = vec![DVector::zeros(psi0.len()); n];
        let mut psi_minus = psi.clone();
        let mut records = Vec::with_capacity(self.jumps.len());
        let mut cur = psi0.clone();
        let mut next_jump = 0;
        for (s, e, flow) in &self.arcs {
            for (j, phi) in flow.phi.iter().enumerate() {
                let v = phi * &cur;
                if j > 0 || *s == 0 {
                    psi_minus[s + j] = v.clone();
                }
                psi[s + j] = v;
            }
            if let Some(js) = self.jumps.get(next_jump).filter(|js| js.index == *e) {
                let before = psi_minus[*e].clone();
                let after = &js.inv_jac_t * &before + &js.grad * nus[next_jump];
                records.push(JumpRecord {
                    time: js.time,
                    edge: js.edge,
                    nu: nus[next_jump],
                    psi_before: before,
                    psi_after: after.clone(),
                    inv_jac_t: js.inv_jac_t.clone(),
                    grad: js.grad.clone(),
                });
                psi[*e] = after;
                next_jump += 1;
            }
            cur = psi[*e].clone();
        }
        if n == 1 {
            psi[0] = psi0.clone();
            psi_minus[0] = psi0.clone();
        }
        Ok(JumpAdjointState { state: AdjointState { times: self.times.clone(), psi }, psi_minus, records })
    }

    /// Trapezoidal defect of `ψ̇ + Aᵀψ` within arcs.
    pub fn residual(&self, st: &JumpAdjointState) -> f64 {
        self.arcs
            .iter()
            .map(|(s, e, flow)| {
                let mut seg: Vec<DVector<f64>> = st.state.psi[*s..*e].to_vec();
                seg.push(st.psi_minus[*e].clone());
                flow.residual(&seg)
            })
            .fold(0.0, f64::max)
    }
}

/// A nonsmooth reference pair against which costates with jumps are checked.
pub trait NonsmoothReference: Sync {
    fn state_dim(&self) -> usize;
    fn trajectory(&self) -> &Trajectory;
    fn flow(&self) -> &JumpAdjointFlow;
    fn velocity(&self, k: usize) -> &DVector<f64>;
    /// Maximum of `⟨ψ, v⟩` over the admissible velocities at sample `k`.
    fn max_value(&self, k: usize, psi: &DVector<f64>) -> Result<f64>;
    /// Switching-inequality excess at jump `j`.
    fn switching_excess(&self, _j: usize, _psi_minus: &DVector<f64>, _psi_plus: &DVector<f64>) -> f64 {
        0.0
    }
    fn admissibility_defect(&self) -> f64 {
        0.0
    }
    fn event_count(&self) -> usize {
        self.flow().jumps.len()
    }
}

pub fn adjoint_with_jumps<R: NonsmoothReference + ?Sized>(reference: &R, psi0: &DVector<f64>, multipliers: &[f64]) -> Result<JumpAdjointState> {
    if psi0.len() != reference.state_dim() {
        return config("psi0 dimension disagrees with the reference");
    }
    reference.flow().propagate(psi0, multipliers)
}

pub fn check_nonsmooth_candidate<R: NonsmoothReference + ?Sized>(
    reference: &R,
    psi0: &DVector<f64>,
    multipliers: &[f64],
    sense: Sense,
    tol: f64,
) -> Result<CertificateReport> {
    let st = adjoint_with_jumps(reference, psi0, multipliers)?;
    let mut rep = CertificateReport::new(tol);
    rep.admissibility_defect = reference.admissibility_defect();
    let scale = st.state.psi.iter().chain(&st.psi_minus).map(|p| p.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        rep.nontriviality_slack = 1.0;
        rep.jumps = Some(JumpResiduals { jump_residuals: vec![0.0; st.records.len()], switching_transversality_excess: 0.0 });
        rep.finalize();
        return Ok(rep);
    }
    let inv = 1.0 / scale;
    rep.adjoint_residual = reference.flow().residual(&st) * inv;
    let tr = reference.trajectory();
    let last = tr.len() - 1;
    for k in 0..tr.len() {
        let p = &st.state.psi[k] * inv;
        let m = reference.max_value(k, &p)?;
        let gap = (p.dot(reference.velocity(k)) - m).abs();
        if gap > rep.max_gap {
            rep.max_gap = gap;
            rep.max_gap_time = tr.times[k];
        }
        if k == last {
            let pm = &st.psi_minus[k] * inv;
            rep.transversality_excess = sense.terminal_excess(reference.max_value(k, &pm)?);
        }
    }
    let jump_residuals = st.records.iter().map(|r| r.formula_residual() * inv).collect();
    let switching = st
        .records
        .iter()
        .enumerate()
        .map(|(j, r)| reference.switching_excess(j, &(&r.psi_before * inv), &(&r.psi_after * inv)))
        .fold(0.0, f64::max);
    rep.jumps = Some(JumpResiduals { jump_residuals, switching_transversality_excess: switching });
    rep.finalize();
    Ok(rep)
}

#[derive(Debug, Clone)]
pub struct NonsmoothSearchResult {
    pub min_violation: f64,
    pub psi0: DVector<f64>,
    pub multipliers: Vec<f64>,
    pub report: CertificateReport,
    pub modulus: f64,
    pub evaluated: usize,
}

/// Exhaustive search over unit `psi0` and a multiplier grid per event.
pub fn search_nonsmooth<R: NonsmoothReference>(
    reference: &R,
    sense: Sense,
    sphere: &SphereGrid,
    nu_grid: &[f64],
    tol: f64,
) -> Result<NonsmoothSearchResult> {
    let sphere = SphereGrid::checked(sphere.dim, sphere.steps)?;
    if sphere.dim != reference.state_dim() {
        return config("sphere grid dimension disagrees with the reference");
    }
    let n_ev = reference.event_count();
    if n_ev > 0 && nu_grid.is_empty() {
        return config("multiplier grid is empty");
    }
    let mut nus: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..n_ev {
        nus = nus.into_iter().flat_map(|p| nu_grid.iter().map(move |&v| {
            let mut q = p.clone();
            q.push(v);
            q
        })).collect();
    }
    let psis = sphere.points();
    let jobs: Vec<(usize, usize)> = (0..psis.len()).flat_map(|i| (0..nus.len()).map(move |j| (i, j))).collect();
    let evaluated = jobs.len();
    let results: Vec<Result<(f64, DVector<f64>, CertificateReport)>> = jobs
        .into_par_iter()
        .map(|(i, j)| {
            let rep = check_nonsmooth_candidate(reference, &psis[i], &nus[j], sense, tol)?;
            let mut key: Vec<f64> = psis[i].iter().copied().collect();
            key.extend(&nus[j]);
            Ok((rep.violation, DVector::from_vec(key), rep))
        })
        .collect();
    let items = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (v, key, report) = select_min(items).expect("nonempty grid");
    let d = sphere.dim;
    Ok(NonsmoothSearchResult {
        min_violation: v,
        psi0: key.rows(0, d).into_owned(),
        multipliers: key.iter().skip(d).copied().collect(),
        report,
        modulus: sphere.modulus(),
        evaluated,
    })
}

pub type AdjointMatrixFn = Arc<dyn Fn(f64, &DVector<f64>, usize) -> DMatrix<f64> + Send + Sync>;

/// Filippov reference `(x̂, μ̂)`; events in the trajectory (crossings and
/// sliding transitions) carry jumps `ψ⁺ = ψ⁻ + ν∇g`.
#[derive(Clone)]
pub struct FilippovReference {
    pub system: FilippovSystem,
    pub trajectory: Trajectory,
    pub control: GeneralizedControl,
    pub max_cfg: MaxConfig,
    velocities: Vec<DVector<f64>>,
    flow: JumpAdjointFlow,
    defect: f64,
}

impl std::fmt::Debug for FilippovReference {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FilippovReference").field("samples", &self.trajectory.len()).finish()
    }
}

impl FilippovReference {
    /// `adjoint_matrix(t, x, region)` supplies the adjoint coefficient on
    /// each arc; `None` averages the branch Jacobians over `μ̂` (equal
    /// weights on the surface).
    pub fn new(system: FilippovSystem, trajectory: Trajectory, control: GeneralizedControl, adjoint_matrix: Option<AdjointMatrixFn>) -> Result<Self> {
        trajectory.validate()?;
        if trajectory.len() < 2 || trajectory.state_dim() != system.base.state_dim {
            return config("Filippov reference trajectory is too short or has the wrong dimension");
        }
        let surface = system.surface_system()?;
        let region_of = |k: usize| -> usize {
            let q = trajectory.modes[k];
            if q == SLIDING || system.on_surface(&trajectory.states[k]) { SLIDING } else { q }
        };
        let a_default = |t: f64, x: &DVector<f64>, region: usize| -> Result<DMatrix<f64>> {
            match region {
                UPPER | LOWER => averaged_jacobian(&system.base, region, &control, t, x),
                _ => averaged_jacobian(&surface, 0, &control, t, x),
            }
        };
        let mut jumps = Vec::new();
        for e in &trajectory.events {
            if matches!(e.kind, EventKind::GuardCross | EventKind::SlidingEnter | EventKind::SlidingExit) {
                let n = system.base.state_dim;
                jumps.push(JumpSpec {
                    index: e.index,
                    time: e.time,
                    edge: Some((e.payload.from_mode, e.payload.to_mode)),
                    inv_jac_t: DMatrix::identity(n, n),
                    grad: (system.surface.grad_g)(&e.payload.state_before),
                    condition_number: 1.0,
                });
            }
        }
        let flow = JumpAdjointFlow::new(&trajectory.times, jumps, |t, k| {
            let x = trajectory.sample(t);
            let region = region_of(k);
            match &adjoint_matrix {
                Some(f) => Ok(f(t, &x, region)),
                None => a_default(t, &x, region),
            }
        })?;
        let velocities: Vec<DVector<f64>> = (0..trajectory.len()).map(|k| trajectory.velocity(k)).collect();
        let mut defect: f64 = 0.0;
        for k in 0..trajectory.len() {
            let t = trajectory.times[k];
            let x = &trajectory.states[k];
            let drift = match region_of(k) {
                SLIDING => eval_convexified_drift(&surface, 0, &control, t, x)?,
                q => eval_convexified_drift(&system.base, q, &control, t, x)?,
            };
            defect = defect.max((&velocities[k] - drift).norm());
        }
        Ok(Self { system, trajectory, control, max_cfg: MaxConfig::default(), velocities, flow, defect })
    }
}

impl NonsmoothReference for FilippovReference {
    fn state_dim(&self) -> usize {
        self.system.base.state_dim
    }
    fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }
    fn flow(&self) -> &JumpAdjointFlow {
        &self.flow
    }
    fn velocity(&self, k: usize) -> &DVector<f64> {
        &self.velocities[k]
    }
    fn max_value(&self, k: usize, psi: &DVector<f64>) -> Result<f64> {
        let set = filippov_set_eval(&self.system, self.trajectory.times[k], &self.trajectory.states[k], &self.max_cfg)?;
        Ok(set.support(psi))
    }
    fn admissibility_defect(&self) -> f64 {
        self.defect
    }
}

impl FirstOrderReference for FilippovReference {
    fn state_dim(&self) -> usize {
        self.system.base.state_dim
    }
    fn check(&self, cand: &FirstOrderCandidate, tol: f64) -> Result<CertificateReport> {
        if self.event_count() > 0 {
            return config("reference has events; supply multipliers via check_nonsmooth_candidate");
        }
        check_nonsmooth_candidate(self, &cand.psi0, &[], cand.sense, tol)
    }
}

/// Hybrid reference trajectory produced by [`super::simulate_hybrid`].
#[derive(Debug, Clone)]
pub struct HybridReference {
    pub automaton: HybridAutomaton,
    pub trajectory: Trajectory,
    pub max_cfg: MaxConfig,
    velocities: Vec<DVector<f64>>,
    before_velocities: Vec<DVector<f64>>,
    flow: JumpAdjointFlow,
}

impl HybridReference {
    pub fn new(automaton: HybridAutomaton, trajectory: Trajectory) -> Result<Self> {
        trajectory.validate()?;
        let sys = &automaton.system;
        if trajectory.len() < 2 || trajectory.controls.len() != trajectory.len() {
            return config("hybrid reference needs samples with recorded controls");
        }
        let velocities: Vec<DVector<f64>> = (0..trajectory.len())
            .map(|k| sys.modes[trajectory.modes[k]].eval(trajectory.times[k], &trajectory.states[k], &trajectory.controls[k]))
            .collect();
        let mut jumps = Vec::new();
        let mut before_velocities = Vec::new();
        for e in &trajectory.events {
            let Some(i) = e.payload.edge else { continue };
            let edge = &automaton.edges[i];
            let jac = (edge.reset_jacobian)(&e.payload.state_before);
            let inv = jac.clone().try_inverse().ok_or_else(|| Error::Jump(format!("singular reset Jacobian at t = {}", e.time)))?;
            jumps.push(JumpSpec {
                index: e.index,
                time: e.time,
                edge: Some((edge.from, edge.to)),
                inv_jac_t: inv.transpose(),
                grad: (edge.guard_grad)(&e.payload.state_before),
                condition_number: super::hybrid::condition_number(&jac),
            });
            let u_before = &trajectory.controls[e.index - 1];
            before_velocities.push(sys.modes[e.payload.from_mode].eval(e.time, &e.payload.state_before, u_before));
        }
        let flow = JumpAdjointFlow::new(&trajectory.times, jumps, |t, k| {
            let q = trajectory.modes[k];
            Ok(sys.modes[q].jac(t, &trajectory.sample(t), &trajectory.controls[k]))
        })?;
        Ok(Self { automaton, trajectory, max_cfg: MaxConfig::default(), velocities, before_velocities, flow })
    }

    pub fn events(&self) -> &[JumpSpec] {
        &self.flow.jumps
    }
}

impl NonsmoothReference for HybridReference {
    fn state_dim(&self) -> usize {
        self.automaton.system.state_dim
    }
    fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }
    fn flow(&self) -> &JumpAdjointFlow {
        &self.flow
    }
    fn velocity(&self, k: usize) -> &DVector<f64> {
        &self.velocities[k]
    }
    fn max_value(&self, k: usize, psi: &DVector<f64>) -> Result<f64> {
        let q = self.trajectory.modes[k];
        Ok(mode_max(&self.automaton.system.modes[q], self.trajectory.times[k], &self.trajectory.states[k], psi, &self.max_cfg)?.0)
    }
    fn switching_excess(&self, j: usize, psi_minus: &DVector<f64>, psi_plus: &DVector<f64>) -> f64 {
        let idx = self.flow.jumps[j].index;
        (psi_plus.dot(&self.velocities[idx]) - psi_minus.dot(&self.before_velocities[j])).max(0.0)
    }
}
