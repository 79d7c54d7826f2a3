//! First-order adjoint propagation, certificate residuals and unit-sphere
//! searches over initial costates.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::{
    averaged_jacobian, eval_convexified_drift, hamiltonian_max, lex_cmp, ControlSystem,
    GeneralizedControl, MaxConfig, Trajectory,
};
use crate::error::{config, Error, Result};
use crate::report::{CertificateReport, Sense};

/// Costate samples on a time grid (stored as column vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub times: Vec<f64>,
    pub psi: Vec<DVector<f64>>,
}

impl AdjointState {
    pub fn sup_norm(&self) -> f64 {
        self.psi.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderCandidate {
    pub psi0: DVector<f64>,
    pub sense: Sense,
}

impl FirstOrderCandidate {
    pub fn new(psi0: DVector<f64>, sense: Sense) -> Result<Self> {
        if psi0.iter().any(|v| !v.is_finite()) {
            return config("psi0 must be finite");
        }
        Ok(Self { psi0, sense })
    }
}

/// What to do when the reference velocity is not reproduced by the
/// convexified drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdmissibilityPolicy {
    /// Fail with a precondition error when the defect exceeds the tolerance.
    Enforce { tol: f64 },
    /// Record the defect in every report and carry on.
    Report,
}

impl Default for AdmissibilityPolicy {
    fn default() -> Self {
        Self::Enforce { tol: 1e-6 }
    }
}

/// State transition of a linear adjoint `ψ̇ = −A(t)ᵀψ` over a grid.
#[derive(Debug, Clone)]
pub struct LinearAdjointFlow {
    pub times: Vec<f64>,
    /// `A` at each grid time.
    pub a: Vec<DMatrix<f64>>,
    /// `ψ(t_k) = Φ_k ψ(t_0)`.
    pub phi: Vec<DMatrix<f64>>,
}

impl LinearAdjointFlow {
    /// `a_at(t, k)` must return `A(t)` for `t` in `[t_k, t_{k+1}]`.
    pub fn new<F: Fn(f64, usize) -> Result<DMatrix<f64>>>(times: &[f64], a_at: F) -> Result<Self> {
        let n_t = times.len();
        let mut a = Vec::with_capacity(n_t);
        for (k, &t) in times.iter().enumerate() {
            a.push(a_at(t, k.min(n_t.saturating_sub(2)))?);
        }
        let n = a[0].nrows();
        let mut phi = Vec::with_capacity(n_t);
        phi.push(DMatrix::identity(n, n));
        for k in 0..n_t - 1 {
            let (t0, t1) = (times[k], times[k + 1]);
            let h = t1 - t0;
            let am = a_at(0.5 * (t0 + t1), k)?;
            let a1 = a_at(t1, k)?;
            let p = &phi[k];
            let f = |m: &DMatrix<f64>, y: &DMatrix<f64>| -(m.transpose() * y);
            let k1 = f(&a[k], p);
            let k2 = f(&am, &(p + &k1 * (0.5 * h)));
            let k3 = f(&am, &(p + &k2 * (0.5 * h)));
            let k4 = f(&a1, &(p + &k3 * h));
            let next = p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integration { time: t1, detail: "adjoint blow-up".into() });
            }
            phi.push(next);
        }
        Ok(Self { times: times.to_vec(), a, phi })
    }

    pub fn propagate(&self, psi0: &DVector<f64>) -> AdjointState {
        AdjointState { times: self.times.clone(), psi: self.phi.iter().map(|p| p * psi0).collect() }
    }

    /// Sup over steps of the trapezoidal defect of `ψ̇ + Aᵀψ`.
    pub fn residual(&self, psi: &[DVector<f64>]) -> f64 {
        (0..psi.len().saturating_sub(1))
            .map(|k| {
                let h = self.times[k + 1] - self.times[k];
                let d = (&psi[k + 1] - &psi[k]) / h
                    + (self.a[k].tr_mul(&psi[k]) + self.a[k + 1].tr_mul(&psi[k + 1])) * 0.5;
                d.amax()
            })
            .fold(0.0, f64::max)
    }
}

/// A reference pair against which first-order candidates can be checked.
pub trait FirstOrderReference: Sync {
    fn state_dim(&self) -> usize;
    fn check(&self, cand: &FirstOrderCandidate, tol: f64) -> Result<CertificateReport>;
}

/// A smooth single-mode reference `(x̂, μ̂)`.
#[derive(Debug, Clone)]
pub struct RelaxedReference {
    pub system: ControlSystem,
    pub mode: usize,
    pub trajectory: Trajectory,
    pub control: GeneralizedControl,
    pub policy: AdmissibilityPolicy,
    pub max_cfg: MaxConfig,
    flow: LinearAdjointFlow,
    defect: f64,
    defect_time: f64,
}

impl RelaxedReference {
    pub fn new(
        system: ControlSystem,
        mode: usize,
        trajectory: Trajectory,
        control: GeneralizedControl,
        policy: AdmissibilityPolicy,
    ) -> Result<Self> {
        system.mode(mode)?;
        trajectory.validate()?;
        if trajectory.len() < 2 {
            return config("reference trajectory needs at least two samples");
        }
        if trajectory.state_dim() != system.state_dim {
            return config("reference trajectory dimension disagrees with the system");
        }
        let (a, b) = control.span();
        let tol = 1e-9 * (1.0 + a.abs().max(b.abs()));
        if (trajectory.times[0] - a).abs() > tol || (trajectory.times[trajectory.len() - 1] - b).abs() > tol {
            return config("reference trajectory and control must cover the same span");
        }
        let flow = LinearAdjointFlow::new(&trajectory.times, |t, _| {
            averaged_jacobian(&system, mode, &control, t, &trajectory.sample(t))
        })?;
        let mut defect: f64 = 0.0;
        let mut defect_time = trajectory.times[0];
        for k in 0..trajectory.len() {
            let t = trajectory.times[k];
            let d = (trajectory.velocity(k) - eval_convexified_drift(&system, mode, &control, t, &trajectory.states[k])?).norm();
            if d > defect {
                defect = d;
                defect_time = t;
            }
        }
        let r = Self { system, mode, trajectory, control, policy, max_cfg: MaxConfig::default(), flow, defect, defect_time };
        r.admissibility()?;
        Ok(r)
    }

    /// Worst velocity defect and its time.
    pub fn admissibility_defect(&self) -> (f64, f64) {
        (self.defect, self.defect_time)
    }

    fn admissibility(&self) -> Result<()> {
        if let AdmissibilityPolicy::Enforce { tol } = self.policy {
            if self.defect > tol {
                return Err(Error::Precondition {
                    detail: "reference velocity is not reproduced by the convexified drift".into(),
                    defect: self.defect,
                    time: self.defect_time,
                });
            }
        }
        Ok(())
    }

    pub fn flow(&self) -> &LinearAdjointFlow {
        &self.flow
    }

    pub fn propagate_adjoint(&self, psi0: &DVector<f64>) -> Result<AdjointState> {
        if psi0.len() != self.system.state_dim {
            return config("psi0 dimension disagrees with the system");
        }
        Ok(self.flow.propagate(psi0))
    }

    pub fn max_function(&self, k: usize, psi: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        hamiltonian_max(&self.system, self.mode, self.trajectory.times[k], &self.trajectory.states[k], psi, &self.max_cfg)
    }

    /// First-order residuals for an already propagated costate.
    pub(crate) fn residuals_for(&self, psi: &[DVector<f64>], sense: Sense, tol: f64) -> Result<(CertificateReport, f64)> {
        let mut rep = CertificateReport::new(tol);
        rep.admissibility_defect = self.defect;
        let scale = psi.iter().map(|p| p.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            rep.nontriviality_slack = 1.0;
            rep.finalize();
            return Ok((rep, 0.0));
        }
        let psi: Vec<DVector<f64>> = psi.iter().map(|p| p / scale).collect();
        rep.adjoint_residual = self.flow.residual(&psi);
        let tr = &self.trajectory;
        for (k, p) in psi.iter().enumerate() {
            let (m, _) = self.max_function(k, p)?;
            let gap = (p.dot(&tr.velocity(k)) - m).abs();
            if gap > rep.max_gap {
                rep.max_gap = gap;
                rep.max_gap_time = tr.times[k];
            }
            if k + 1 == psi.len() {
                rep.transversality_excess = sense.terminal_excess(m);
            }
        }
        rep.finalize();
        Ok((rep, scale))
    }
}

impl FirstOrderReference for RelaxedReference {
    fn state_dim(&self) -> usize {
        self.system.state_dim
    }

    fn check(&self, cand: &FirstOrderCandidate, tol: f64) -> Result<CertificateReport> {
        check_first_order_candidate(self, cand, tol)
    }
}

pub fn check_first_order_candidate(
    reference: &RelaxedReference,
    cand: &FirstOrderCandidate,
    tol: f64,
) -> Result<CertificateReport> {
    reference.admissibility()?;
    let adj = reference.propagate_adjoint(&cand.psi0)?;
    Ok(reference.residuals_for(&adj.psi, cand.sense, tol)?.0)
}

/// Uniform grid on the unit sphere in hyperspherical coordinates with
/// angular step `π / steps`; poles appear once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SphereGrid {
    pub dim: usize,
    pub steps: usize,
}

impl SphereGrid {
    /// Unchecked constructor; see [`SphereGrid::checked`].
    pub fn new(dim: usize, steps: usize) -> Self {
        Self { dim, steps }
    }

    pub fn checked(dim: usize, steps: usize) -> Result<Self> {
        if dim == 0 {
            return config("sphere grid dimension must be positive");
        }
        if steps < 8 {
            return config(format!("sphere grid needs at least 8 steps per angle, got {steps}"));
        }
        Ok(Self { dim, steps })
    }

    /// Grid with roughly `deg` degrees between neighbouring points.
    pub fn degrees(dim: usize, deg: f64) -> Result<Self> {
        Self::checked(dim, (180.0 / deg).round() as usize)
    }

    pub fn angular_step(&self) -> f64 {
        PI / self.steps as f64
    }

    /// Bound on the distance from any unit vector to the nearest grid point.
    pub fn modulus(&self) -> f64 {
        self.angular_step() * ((self.dim.max(2) - 1) as f64).sqrt()
    }

    pub fn points(&self) -> Vec<DVector<f64>> {
        let h = self.angular_step();
        match self.dim {
            0 => vec![],
            1 => vec![DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)],
            _ => {
                let mut out = Vec::new();
                let mut prefix = Vec::with_capacity(self.dim);
                self.recurse(1.0, &mut prefix, h, &mut out);
                out
            }
        }
    }

    fn recurse(&self, radius: f64, prefix: &mut Vec<f64>, h: f64, out: &mut Vec<DVector<f64>>) {
        let remaining = self.dim - prefix.len();
        if remaining == 2 {
            for j in 0..2 * self.steps {
                let a = j as f64 * h;
                let mut v = prefix.clone();
                v.push(radius * a.cos());
                v.push(radius * a.sin());
                out.push(DVector::from_vec(v));
            }
            return;
        }
        for i in 0..=self.steps {
            let th = i as f64 * h;
            prefix.push(radius * th.cos());
            if i == 0 || i == self.steps {
                let mut v = prefix.clone();
                v.resize(self.dim, 0.0);
                out.push(DVector::from_vec(v));
            } else {
                self.recurse(radius * th.sin(), prefix, h, out);
            }
            prefix.pop();
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub min_violation: f64,
    pub argmin: DVector<f64>,
    pub report: CertificateReport,
    /// Angular modulus of the grid that produced the minimum.
    pub modulus: f64,
    pub evaluated: usize,
}

/// Picks the smallest violation; equal minima go to the lexicographically
/// smallest candidate key.
pub(crate) fn select_min<T>(items: Vec<(f64, DVector<f64>, T)>) -> Option<(f64, DVector<f64>, T)> {
    items.into_iter().reduce(|best, cur| {
        if cur.0 < best.0 || (cur.0 == best.0 && lex_cmp(&cur.1, &best.1).is_lt()) {
            cur
        } else {
            best
        }
    })
}

/// Exhaustive evaluation of unit initial costates on `grid`.
pub fn search_first_order<R: FirstOrderReference>(
    reference: &R,
    sense: Sense,
    grid: &SphereGrid,
    tol: f64,
) -> Result<SearchResult> {
    let grid = SphereGrid::checked(grid.dim, grid.steps)?;
    if grid.dim != reference.state_dim() {
        return config("sphere grid dimension disagrees with the reference");
    }
    let points = grid.points();
    let evaluated = points.len();
    let results: Vec<Result<(f64, DVector<f64>, CertificateReport)>> = points
        .into_par_iter()
        .map(|p| {
            let rep = reference.check(&FirstOrderCandidate { psi0: p.clone(), sense }, tol)?;
            Ok((rep.violation, p, rep))
        })
        .collect();
    let items = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (v, p, report) = select_min(items).expect("nonempty grid");
    Ok(SearchResult { min_violation: v, argmin: p, report, modulus: grid.modulus(), evaluated })
}
