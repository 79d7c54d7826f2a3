//! Second variations, the matrix Riccati inequality and second-order
//! certificate residuals.
//!
//! Tensor contractions follow one index convention throughout: the
//! curvature pairing `⟨Q, f_xx(δx,δx)⟩` is `Σ_k Q_kk δxᵀ ∂²f_k δx`, while the
//! Riccati term and the scalar accumulator use the component sum
//! `Σ_k ⟨μ̂, ∂²f_k⟩`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::{
    affine_max, argmax_over, averaged_hessians, lex_cmp, march, mode_max, ControlSetSpec,
    ControlSystem, MaxConfig, ModeDynamics,
};
use crate::error::{config, Error, Result};
use crate::first_order::{select_min, RelaxedReference, SphereGrid};
use crate::linalg::{max_eigenvalue, symmetry_defect};
use crate::report::{CertificateReport, SecondOrderResiduals, Sense};

#[derive(Debug, Clone, PartialEq)]
pub struct VariationPiece {
    pub start: f64,
    pub end: f64,
    /// Control points with signed weights summing to zero.
    pub atoms: Vec<(DVector<f64>, f64)>,
}

/// Mass-preserving signed atomic perturbation of a relaxed control.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasureVariation {
    pieces: Vec<VariationPiece>,
}

impl MeasureVariation {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(pieces: Vec<VariationPiece>, set: &ControlSetSpec) -> Result<Self> {
        for (k, p) in pieces.iter().enumerate() {
            if !(p.end > p.start) {
                return config(format!("variation piece {k} has an empty interval"));
            }
            if k > 0 && p.start < pieces[k - 1].end - 1e-12 {
                return config(format!("variation pieces {} and {k} overlap", k - 1));
            }
            let sum: f64 = p.atoms.iter().map(|a| a.1).sum();
            if sum.abs() > 1e-12 {
                return config(format!("variation piece {k} has total mass {sum}, expected 0"));
            }
            if let Some(a) = p.atoms.iter().find(|a| !set.contains(&a.0)) {
                return Err(Error::Domain(format!("variation atom {:?} outside the control set", a.0.as_slice())));
            }
        }
        Ok(Self { pieces })
    }

    /// Moves weight `w` from `from` to `to` on `[start, end]`.
    pub fn shift(from: DVector<f64>, to: DVector<f64>, w: f64, span: (f64, f64), set: &ControlSetSpec) -> Result<Self> {
        Self::new(vec![VariationPiece { start: span.0, end: span.1, atoms: vec![(to, w), (from, -w)] }], set)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            pieces: self
                .pieces
                .iter()
                .map(|p| VariationPiece { atoms: p.atoms.iter().map(|(u, w)| (u.clone(), w * c)).collect(), ..p.clone() })
                .collect(),
        }
    }

    pub fn pieces(&self) -> &[VariationPiece] {
        &self.pieces
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.iter().all(|p| p.atoms.iter().all(|a| a.1 == 0.0))
    }

    pub fn atoms_at(&self, t: f64) -> &[(DVector<f64>, f64)] {
        self.pieces
            .iter()
            .rev()
            .find(|p| t >= p.start - 1e-12 && t <= p.end + 1e-12)
            .map_or(&[], |p| p.atoms.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationPair {
    pub times: Vec<f64>,
    pub delta_x: Vec<DVector<f64>>,
    pub delta2_x: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiMatrix {
    pub times: Vec<f64>,
    pub q: Vec<DMatrix<f64>>,
}

impl RiccatiMatrix {
    pub fn new(times: Vec<f64>, q: Vec<DMatrix<f64>>) -> Result<Self> {
        let r = Self { times, q };
        r.validate()?;
        Ok(r)
    }

    pub fn from_fn<F: Fn(f64) -> DMatrix<f64>>(times: &[f64], f: F) -> Result<Self> {
        Self::new(times.to_vec(), times.iter().map(|&t| f(t)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.q.len() {
            return config("Riccati matrix grid and samples differ in length");
        }
        for (t, q) in self.times.iter().zip(&self.q) {
            if q.nrows() != q.ncols() {
                return config("Riccati matrix samples must be square");
            }
            if symmetry_defect(q) > 1e-12 {
                return Err(Error::Invariant(format!("Q is not symmetric at t = {t}")));
            }
        }
        Ok(())
    }

    pub fn max_symmetry_defect(&self) -> f64 {
        self.q.iter().map(symmetry_defect).fold(0.0, f64::max)
    }
}

/// How `Q(·)` is obtained for a candidate.
#[derive(Debug, Clone, PartialEq)]
pub enum QProfile {
    /// Integrate the Riccati equality (the inequality with zero slack) from `Q(t1) = q0`.
    RiccatiFlow { q0: DMatrix<f64> },
    Explicit(RiccatiMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderCandidate {
    pub psi0: DVector<f64>,
    pub q: QProfile,
    pub psi_scalar0: f64,
    pub dmu: MeasureVariation,
    pub d2mu: MeasureVariation,
    pub sense: Sense,
}

impl SecondOrderCandidate {
    pub fn q0(&self) -> DMatrix<f64> {
        match &self.q {
            QProfile::RiccatiFlow { q0 } => q0.clone(),
            QProfile::Explicit(r) => r.q[0].clone(),
        }
    }
}

fn hess_sum(h: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    h.iter().fold(DMatrix::zeros(n, n), |a, b| a + b)
}

pub fn propagate_variation(
    reference: &RelaxedReference,
    dmu: &MeasureVariation,
    d2mu: &MeasureVariation,
) -> Result<VariationPair> {
    let sys = &reference.system;
    let m = sys.mode(reference.mode)?;
    let n = sys.state_dim;
    let tr = &reference.trajectory;
    let times = &tr.times;
    let z0 = DVector::zeros(2 * n);
    if dmu.is_zero() && d2mu.is_zero() {
        return Ok(VariationPair {
            times: times.clone(),
            delta_x: vec![DVector::zeros(n); times.len()],
            delta2_x: vec![DVector::zeros(n); times.len()],
        });
    }
    let mu = &reference.control;
    let mode = reference.mode;
    let z = march(&z0, times, false, |a, b| {
        let mid = 0.5 * (a + b);
        let d1 = dmu.atoms_at(mid).to_vec();
        let d2 = d2mu.atoms_at(mid).to_vec();
        move |t: f64, z: &DVector<f64>| {
            let x = tr.sample(t);
            let a_bar = crate::dynamics::averaged_jacobian(sys, mode, mu, t, &x).expect("reference span");
            let h_bar = averaged_hessians(sys, mode, mu, t, &x).expect("reference span");
            let dx = z.rows(0, n).into_owned();
            let d2x = z.rows(n, n).into_owned();
            let mut r1 = &a_bar * &dx;
            let mut r2 = &a_bar * &d2x;
            for (k, hk) in h_bar.iter().enumerate() {
                r2[k] += dx.dot(&(hk * &dx));
            }
            for (u, w) in &d1 {
                r1 += m.eval(t, &x, u) * *w;
                r2 += (m.jac(t, &x, u) * &dx) * (2.0 * w);
            }
            for (u, w) in &d2 {
                r2 += m.eval(t, &x, u) * *w;
            }
            let mut out = DVector::zeros(2 * n);
            out.rows_mut(0, n).copy_from(&r1);
            out.rows_mut(n, n).copy_from(&r2);
            out
        }
    })?;
    Ok(VariationPair {
        times: times.clone(),
        delta_x: z.states.iter().map(|s| s.rows(0, n).into_owned()).collect(),
        delta2_x: z.states.iter().map(|s| s.rows(n, n).into_owned()).collect(),
    })
}

fn time_derivative(times: &[f64], q: &[DMatrix<f64>], k: usize) -> DMatrix<f64> {
    let n = times.len();
    if n < 3 {
        return (&q[n - 1] - &q[0]) / (times[n - 1] - times[0]);
    }
    if k == 0 {
        (&q[1] * 4.0 - &q[0] * 3.0 - &q[2]) / (times[2] - times[0])
    } else if k == n - 1 {
        (&q[n - 1] * 3.0 - &q[n - 2] * 4.0 + &q[n - 3]) / (times[n - 1] - times[n - 3])
    } else {
        (&q[k + 1] - &q[k - 1]) / (times[k + 1] - times[k - 1])
    }
}

/// Per-time largest eigenvalue of `Q̇ + QĀ + ĀᵀQ + F̄`.
pub fn riccati_residual(reference: &RelaxedReference, q: &RiccatiMatrix) -> Result<Vec<f64>> {
    q.validate()?;
    let tr = &reference.trajectory;
    if q.times.len() != tr.len() || q.times.iter().zip(&tr.times).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs())) {
        return config("Q grid must match the reference grid");
    }
    let n = reference.system.state_dim;
    if q.q[0].nrows() != n {
        return config("Q dimension disagrees with the system");
    }
    let flow = reference.flow();
    (0..tr.len())
        .map(|k| {
            let t = tr.times[k];
            let a = &flow.a[k];
            let f = hess_sum(&averaged_hessians(&reference.system, reference.mode, &reference.control, t, &tr.states[k])?, n);
            let qk = &q.q[k];
            let lhs = time_derivative(&q.times, &q.q, k) + qk * a + a.transpose() * qk + f;
            max_eigenvalue(&((&lhs + lhs.transpose()) * 0.5))
        })
        .collect()
}

/// Averaged Jacobian and Hessian sizes along the reference: `(sup‖Ā‖, sup‖F̄‖)`.
pub fn averaged_derivative_norms(reference: &RelaxedReference) -> Result<(f64, f64)> {
    let tr = &reference.trajectory;
    let mut ja: f64 = 0.0;
    let mut hb: f64 = 0.0;
    for k in 0..tr.len() {
        ja = ja.max(reference.flow().a[k].amax());
        let h = averaged_hessians(&reference.system, reference.mode, &reference.control, tr.times[k], &tr.states[k])?;
        hb = hb.max(h.iter().map(|m| m.amax()).fold(0.0, f64::max));
    }
    Ok((ja, hb))
}

/// Integrates `Q̇ = −(QĀ + ĀᵀQ + F̄)` from `q0` on the reference grid.
pub fn riccati_flow(reference: &RelaxedReference, q0: &DMatrix<f64>) -> Result<RiccatiMatrix> {
    let n = reference.system.state_dim;
    if q0.shape() != (n, n) {
        return config("Q0 dimension disagrees with the system");
    }
    if symmetry_defect(q0) > 1e-12 {
        return Err(Error::Invariant("Q0 is not symmetric".into()));
    }
    let tr = &reference.trajectory;
    let sys = &reference.system;
    let mu = &reference.control;
    let mode = reference.mode;
    let rhs = |t: f64, q: &DMatrix<f64>| -> DMatrix<f64> {
        let x = tr.sample(t);
        let a = crate::dynamics::averaged_jacobian(sys, mode, mu, t, &x).expect("reference span");
        let f = hess_sum(&averaged_hessians(sys, mode, mu, t, &x).expect("reference span"), n);
        -(q * &a + a.transpose() * q + f)
    };
    let mut out = vec![q0.clone()];
    for k in 0..tr.len() - 1 {
        let (t0, t1) = (tr.times[k], tr.times[k + 1]);
        let h = t1 - t0;
        let q = &out[k];
        let k1 = rhs(t0, q);
        let k2 = rhs(t0 + 0.5 * h, &(q + &k1 * (0.5 * h)));
        let k3 = rhs(t0 + 0.5 * h, &(q + &k2 * (0.5 * h)));
        let k4 = rhs(t1, &(q + &k3 * h));
        let next = q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { time: t1, detail: "Riccati blow-up".into() });
        }
        out.push((&next + next.transpose()) * 0.5);
    }
    RiccatiMatrix::new(tr.times.clone(), out)
}

/// Quadratic part of `H²` for one control.
fn h2_quadratic(m: &ModeDynamics, t: f64, x: &DVector<f64>, q: &DMatrix<f64>, u: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    let mut v = dx.dot(&(q * (m.jac(t, x, u) * dx)));
    if m.hessian.is_some() {
        for (k, hk) in m.hess(t, x, u).iter().enumerate() {
            v += q[(k, k)] * dx.dot(&(hk * dx));
        }
    }
    v
}

fn mode_h2(m: &ModeDynamics, t: f64, x: &DVector<f64>, psi: &DVector<f64>, q: &DMatrix<f64>, u: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    psi.dot(&m.eval(t, x, u)) + h2_quadratic(m, t, x, q, u, dx)
}

fn mode_m2(
    m: &ModeDynamics,
    t: f64,
    x: &DVector<f64>,
    psi: &DVector<f64>,
    q: &DMatrix<f64>,
    dx: &DVector<f64>,
    cfg: &MaxConfig,
) -> Result<(f64, DVector<f64>)> {
    if dx.iter().all(|&v| v == 0.0) || q.iter().all(|&v| v == 0.0) {
        return mode_max(m, t, x, psi, cfg);
    }
    if let ControlSetSpec::FiniteSet(points) = &m.control_set {
        return Ok(argmax_over(points.iter(), |u| mode_h2(m, t, x, psi, q, u, dx)));
    }
    if let (Some(fs), Some(js), None) = (&m.affine_split, &m.jacobian_split, &m.hessian) {
        let (g0, g) = fs(t, x);
        let (j0, ji) = js(t, x);
        let qdx = q * dx;
        let base = psi.dot(&g0) + qdx.dot(&(&j0 * dx));
        let mut c = g.tr_mul(psi);
        for (i, j) in ji.iter().enumerate() {
            c[i] += qdx.dot(&(j * dx));
        }
        return Ok(affine_max(&m.control_set, base, &c));
    }
    if !cfg.grid_fallback {
        return Err(Error::Capability(format!("mode '{}' needs grid fallback for M²", m.name)));
    }
    let mut pts = m.control_set.grid(cfg);
    pts.extend(m.control_set.extreme_points(cfg));
    pts.sort_by(lex_cmp);
    Ok(argmax_over(pts.iter(), |u| mode_h2(m, t, x, psi, q, u, dx)))
}

/// `(H²(u), M²)` at one point.
#[allow(clippy::too_many_arguments)]
pub fn second_order_hamiltonian(
    system: &ControlSystem,
    mode: usize,
    t: f64,
    x: &DVector<f64>,
    psi: &DVector<f64>,
    q: &DMatrix<f64>,
    u: &DVector<f64>,
    dx: &DVector<f64>,
    cfg: &MaxConfig,
) -> Result<(f64, f64)> {
    let n = system.state_dim;
    if symmetry_defect(q) > 1e-12 {
        return Err(Error::Invariant("Q is not symmetric".into()));
    }
    if psi.len() != n || dx.len() != n || q.shape() != (n, n) {
        return config("second-order Hamiltonian arguments disagree with state_dim");
    }
    let m = system.mode(mode)?;
    let h = psi.dot(&crate::dynamics::eval_vector_field(system, mode, t, x, u)?) + h2_quadratic(m, t, x, q, u, dx);
    Ok((h, mode_m2(m, t, x, psi, q, dx, cfg)?.0))
}

/// Direct index-sum evaluation of `H²`, kept independent of the optimised path.
pub fn second_order_hamiltonian_index_sum(
    m: &ModeDynamics,
    t: f64,
    x: &DVector<f64>,
    psi: &DVector<f64>,
    q: &DMatrix<f64>,
    u: &DVector<f64>,
    dx: &DVector<f64>,
) -> f64 {
    let n = x.len();
    let f = m.eval(t, x, u);
    let fx = m.jac(t, x, u);
    let fxx = m.hess(t, x, u);
    let mut h = 0.0;
    for i in 0..n {
        h += psi[i] * f[i];
    }
    for i in 0..n {
        for j in 0..n {
            let mut sym = 0.0;
            for k in 0..n {
                sym += q[(i, k)] * fx[(k, j)] + fx[(k, i)] * q[(k, j)];
            }
            h += 0.5 * sym * dx[i] * dx[j];
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                h += q[(k, k)] * fxx[k][(i, j)] * dx[i] * dx[j];
            }
        }
    }
    h
}

/// Parts of a second-order check that do not depend on `ψ`.
struct PsiFreeParts {
    q: RiccatiMatrix,
    eig: Vec<f64>,
    var: VariationPair,
    rates: Vec<f64>,
}

fn psi_free_parts(reference: &RelaxedReference, q: &QProfile, dmu: &MeasureVariation, d2mu: &MeasureVariation) -> Result<PsiFreeParts> {
    let tr = &reference.trajectory;
    let q = match q {
        QProfile::RiccatiFlow { q0 } => riccati_flow(reference, q0)?,
        QProfile::Explicit(r) => r.clone(),
    };
    let eig = riccati_residual(reference, &q)?;
    let var = propagate_variation(reference, dmu, d2mu)?;
    let mu = &reference.control;
    let rate = |k: usize| -> Result<f64> {
        let h = averaged_hessians(&reference.system, reference.mode, mu, tr.times[k], &tr.states[k])?;
        let dx = &var.delta_x[k];
        Ok(h.iter().map(|hk| dx.dot(&(hk * dx))).sum())
    };
    let rates = (0..tr.len()).map(rate).collect::<Result<Vec<f64>>>()?;
    Ok(PsiFreeParts { q, eig, var, rates })
}

/// Second-order residuals. The first-order part is identical to
/// [`crate::first_order::check_first_order_candidate`].
pub fn check_second_order_candidate(
    reference: &RelaxedReference,
    cand: &SecondOrderCandidate,
    tol: f64,
    loewner_tol: f64,
) -> Result<CertificateReport> {
    if cand.psi0.len() != reference.system.state_dim {
        return config("psi0 dimension disagrees with the system");
    }
    let parts = psi_free_parts(reference, &cand.q, &cand.dmu, &cand.d2mu)?;
    check_with_parts(reference, cand, &parts, tol, loewner_tol)
}

fn check_with_parts(
    reference: &RelaxedReference,
    cand: &SecondOrderCandidate,
    parts: &PsiFreeParts,
    tol: f64,
    loewner_tol: f64,
) -> Result<CertificateReport> {
    let tr = &reference.trajectory;
    let psi = reference.propagate_adjoint(&cand.psi0)?.psi;
    let PsiFreeParts { q, eig, var, rates } = parts;
    let m = reference.system.mode(reference.mode)?;
    let mu = &reference.control;
    let mut psi_scalar = vec![cand.psi_scalar0];
    for k in 0..tr.len() - 1 {
        let h = tr.times[k + 1] - tr.times[k];
        psi_scalar.push(psi_scalar[k] + 0.5 * h * (rates[k] + rates[k + 1]));
    }

    let psi_sup = psi.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let scale = if psi_sup > 0.0 {
        psi_sup
    } else {
        q.q.iter().map(|m| m.norm()).chain(psi_scalar.iter().map(|v| v.abs())).fold(0.0, f64::max)
    };

    let (mut rep, _) = reference.residuals_for(&psi, cand.sense, tol)?;
    if scale == 0.0 {
        rep.nontriviality_slack = 1.0;
        rep.second_order = Some(SecondOrderResiduals {
            riccati_sup_eigenvalue: eig.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            riccati_excess: 0.0,
            second_max_gap: 0.0,
            psi_scalar_defect: 0.0,
            second_transversality_excess: 0.0,
            psi_scalar,
            loewner_tol,
        });
        rep.finalize();
        return Ok(rep);
    }
    rep.nontriviality_slack = 0.0;
    let inv = 1.0 / scale;
    let sup_eig = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max) * inv;

    let mut second_gap: f64 = 0.0;
    let mut terminal = 0.0;
    for k in 0..tr.len() {
        let t = tr.times[k];
        let x = &tr.states[k];
        let p = &psi[k] * inv;
        let qk = &q.q[k] * inv;
        let dx = &var.delta_x[k];
        let piece = mu.piece_at(t).ok_or_else(|| Error::Domain(format!("t = {t} outside the reference control")))?;
        let quad: f64 = piece.atoms.iter().map(|a| a.weight * h2_quadratic(m, t, x, &qk, &a.point, dx)).sum();
        let h2_ref = p.dot(&tr.velocity(k)) + quad;
        let (m2, _) = mode_m2(m, t, x, &p, &qk, dx, &reference.max_cfg)?;
        second_gap = second_gap.max((h2_ref - m2).abs());
        if k + 1 == tr.len() {
            let (m1, _) = mode_max(m, t, x, &p, &reference.max_cfg)?;
            terminal = m1 + 0.5 * (m2 - m1);
        }
    }
    let mut defect: f64 = 0.0;
    for k in 0..tr.len() - 1 {
        let h = tr.times[k + 1] - tr.times[k];
        let d = (psi_scalar[k + 1] - psi_scalar[k]) / h - 0.5 * (rates[k] + rates[k + 1]);
        defect = defect.max(d.abs() * inv);
    }
    rep.second_order = Some(SecondOrderResiduals {
        riccati_sup_eigenvalue: sup_eig,
        riccati_excess: sup_eig.max(0.0),
        second_max_gap: second_gap,
        psi_scalar_defect: defect,
        second_transversality_excess: cand.sense.terminal_excess(terminal),
        psi_scalar: psi_scalar.iter().map(|v| v * inv).collect(),
        loewner_tol,
    });
    rep.finalize();
    Ok(rep)
}

/// Search space for [`search_second_order`].
#[derive(Debug, Clone)]
pub struct SecondOrderGrid {
    pub sphere: SphereGrid,
    /// Values for each diagonal entry of `Q0`.
    pub q_eigenvalues: Vec<f64>,
    /// Candidate `(δμ, δ²μ)` pairs.
    pub variations: Vec<(MeasureVariation, MeasureVariation)>,
}

#[derive(Debug, Clone)]
pub struct SecondOrderSearchResult {
    pub min_violation: f64,
    pub argmin: SecondOrderCandidate,
    pub report: CertificateReport,
    pub modulus: f64,
    pub evaluated: usize,
}

fn diagonal_grid(values: &[f64], n: usize) -> Vec<DVector<f64>> {
    let mut out: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..n {
        out = out.into_iter().flat_map(|p| values.iter().map(move |&v| {
            let mut q = p.clone();
            q.push(v);
            q
        })).collect();
    }
    out.into_iter().map(DVector::from_vec).collect()
}

/// Exhaustive search over `psi0 × diag(Q0) × variations`.
pub fn search_second_order(
    reference: &RelaxedReference,
    sense: Sense,
    grid: &SecondOrderGrid,
    tol: f64,
    loewner_tol: f64,
) -> Result<SecondOrderSearchResult> {
    let sphere = SphereGrid::checked(grid.sphere.dim, grid.sphere.steps)?;
    let n = reference.system.state_dim;
    if sphere.dim != n {
        return config("sphere grid dimension disagrees with the reference");
    }
    if grid.q_eigenvalues.is_empty() || grid.variations.is_empty() {
        return config("second-order grid needs Q0 values and at least one variation");
    }
    let psis = sphere.points();
    let diags = diagonal_grid(&grid.q_eigenvalues, n);
    let mut jobs = Vec::with_capacity(psis.len() * diags.len() * grid.variations.len());
    for (vi, _) in grid.variations.iter().enumerate() {
        for (di, d) in diags.iter().enumerate() {
            for p in &psis {
                jobs.push((vi, d.clone(), p.clone(), vi * diags.len() + di));
            }
        }
    }
    let evaluated = jobs.len();
    let mut parts = Vec::with_capacity(grid.variations.len() * diags.len());
    for (dmu, d2mu) in &grid.variations {
        for d in &diags {
            parts.push(psi_free_parts(reference, &QProfile::RiccatiFlow { q0: DMatrix::from_diagonal(d) }, dmu, d2mu)?);
        }
    }
    let results: Vec<Result<(f64, DVector<f64>, (SecondOrderCandidate, CertificateReport))>> = jobs
        .into_par_iter()
        .map(|(vi, d, p, pi)| {
            let (dmu, d2mu) = grid.variations[vi].clone();
            let cand = SecondOrderCandidate {
                psi0: p.clone(),
                q: QProfile::RiccatiFlow { q0: DMatrix::from_diagonal(&d) },
                psi_scalar0: 0.0,
                dmu,
                d2mu,
                sense,
            };
            let rep = check_with_parts(reference, &cand, &parts[pi], tol, loewner_tol)?;
            let mut key = vec![vi as f64];
            key.extend(d.iter());
            key.extend(p.iter());
            Ok((rep.violation, DVector::from_vec(key), (cand, rep)))
        })
        .collect();
    let items = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (v, _, (cand, report)) = select_min(items).expect("nonempty grid");
    Ok(SecondOrderSearchResult { min_violation: v, argmin: cand, report, modulus: sphere.modulus(), evaluated })
}
