use nalgebra::{DMatrix, DVector};

use super::control_set::ControlSetSpec;
use super::system::ControlSystem;
use crate::error::{config, Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub point: DVector<f64>,
    pub weight: f64,
}

impl Atom {
    pub fn new(point: DVector<f64>, weight: f64) -> Self {
        Self { point, weight }
    }
}

/// One time piece `[start, end)` of a relaxed control.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPiece {
    pub start: f64,
    pub end: f64,
    pub atoms: Vec<Atom>,
}

/// A finite atomic probability measure on the control set with
/// piecewise-constant weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedControl {
    pieces: Vec<ControlPiece>,
}

fn time_tol(a: f64, b: f64) -> f64 {
    1e-12 * (1.0 + a.abs().max(b.abs()))
}

impl GeneralizedControl {
    pub fn new(pieces: Vec<ControlPiece>, set: &ControlSetSpec, horizon: (f64, f64)) -> Result<Self> {
        if pieces.is_empty() {
            return config("generalized control needs at least one piece");
        }
        let tol = time_tol(horizon.0, horizon.1);
        if (pieces[0].start - horizon.0).abs() > tol || (pieces[pieces.len() - 1].end - horizon.1).abs() > tol {
            return config("generalized control pieces must cover the time horizon");
        }
        for (k, p) in pieces.iter().enumerate() {
            if !(p.end > p.start) {
                return config(format!("piece {k} has empty interval"));
            }
            if k > 0 && (pieces[k - 1].end - p.start).abs() > tol {
                return config(format!("pieces {} and {k} overlap or leave a gap", k - 1));
            }
            if p.atoms.is_empty() {
                return config(format!("piece {k} has no atoms"));
            }
            let mut sum = 0.0;
            for a in &p.atoms {
                if !(a.weight >= 0.0) {
                    return config(format!("piece {k} has a negative weight"));
                }
                if !set.contains(&a.point) {
                    return Err(Error::Domain(format!(
                        "atom {:?} of piece {k} lies outside the control set",
                        a.point.as_slice()
                    )));
                }
                sum += a.weight;
            }
            if (sum - 1.0).abs() > WEIGHT_TOL {
                return config(format!("piece {k} weights sum to {sum}, expected 1"));
            }
        }
        Ok(Self { pieces })
    }

    /// The same atoms on the whole horizon.
    pub fn constant(atoms: Vec<Atom>, set: &ControlSetSpec, horizon: (f64, f64)) -> Result<Self> {
        Self::new(vec![ControlPiece { start: horizon.0, end: horizon.1, atoms }], set, horizon)
    }

    pub fn dirac(u: DVector<f64>, set: &ControlSetSpec, horizon: (f64, f64)) -> Result<Self> {
        Self::constant(vec![Atom::new(u, 1.0)], set, horizon)
    }

    pub fn pieces(&self) -> &[ControlPiece] {
        &self.pieces
    }

    pub fn span(&self) -> (f64, f64) {
        (self.pieces[0].start, self.pieces[self.pieces.len() - 1].end)
    }

    /// The piece active at `t` (right-continuous, closed at the final time).
    pub fn piece_at(&self, t: f64) -> Option<&ControlPiece> {
        let (a, b) = self.span();
        let tol = time_tol(a, b);
        if t < a - tol || t > b + tol {
            return None;
        }
        let k = self.pieces.partition_point(|p| p.end <= t);
        Some(&self.pieces[k.min(self.pieces.len() - 1)])
    }

    fn atoms_at(&self, t: f64) -> Result<&[Atom]> {
        self.piece_at(t)
            .map(|p| p.atoms.as_slice())
            .ok_or_else(|| Error::Domain(format!("t = {t} outside the generalized control's span")))
    }

    /// Weighted mean of the atoms at `t`.
    pub fn mean(&self, t: f64) -> Result<DVector<f64>> {
        let atoms = self.atoms_at(t)?;
        let mut m = DVector::zeros(atoms[0].point.len());
        for a in atoms {
            m += &a.point * a.weight;
        }
        Ok(m)
    }
}

pub fn eval_convexified_drift(
    system: &ControlSystem,
    mode: usize,
    mu: &GeneralizedControl,
    t: f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = system.mode(mode)?;
    system.check_state(x)?;
    let atoms = mu.atoms_at(t)?;
    let mut out = DVector::zeros(system.state_dim);
    for a in atoms {
        if !m.control_set.contains(&a.point) {
            return Err(Error::Domain(format!("atom {:?} outside the control set", a.point.as_slice())));
        }
        if a.weight != 0.0 {
            out += m.eval(t, x, &a.point) * a.weight;
        }
    }
    Ok(out)
}

/// `⟨μ_t, f_x(t, x, ·)⟩`.
pub fn averaged_jacobian(
    system: &ControlSystem,
    mode: usize,
    mu: &GeneralizedControl,
    t: f64,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let m = system.mode(mode)?;
    let n = system.state_dim;
    let mut out = DMatrix::zeros(n, n);
    for a in mu.atoms_at(t)? {
        if a.weight != 0.0 {
            out += m.jac(t, x, &a.point) * a.weight;
        }
    }
    Ok(out)
}

/// Componentwise `⟨μ_t, ∂²f_k(t, x, ·)⟩`.
pub fn averaged_hessians(
    system: &ControlSystem,
    mode: usize,
    mu: &GeneralizedControl,
    t: f64,
    x: &DVector<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let m = system.mode(mode)?;
    let n = system.state_dim;
    let mut out = vec![DMatrix::zeros(n, n); n];
    for a in mu.atoms_at(t)? {
        if a.weight != 0.0 {
            for (o, h) in out.iter_mut().zip(m.hess(t, x, &a.point)) {
                *o += h * a.weight;
            }
        }
    }
    Ok(out)
}

/// An ordinary control signal driving a simulation.
pub trait ControlSignal: Sync {
    fn value(&self, t: f64) -> DVector<f64>;
    /// Times where the signal may jump; integrators step exactly onto them.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Wraps a smooth closure as a [`ControlSignal`].
pub struct FnControl<F>(pub F);

impl<F: Fn(f64) -> DVector<f64> + Sync> ControlSignal for FnControl<F> {
    fn value(&self, t: f64) -> DVector<f64> {
        (self.0)(t)
    }
}

/// Right-continuous piecewise-constant control.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantControl {
    /// `values.len() + 1` increasing times.
    pub breaks: Vec<f64>,
    pub values: Vec<DVector<f64>>,
}

impl PiecewiseConstantControl {
    pub fn new(breaks: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.is_empty() || breaks.len() != values.len() + 1 {
            return config("piecewise-constant control needs values.len() + 1 breaks");
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return config("piecewise-constant control breaks must increase strictly");
        }
        Ok(Self { breaks, values })
    }

    pub fn constant(u: DVector<f64>, span: (f64, f64)) -> Self {
        Self { breaks: vec![span.0, span.1], values: vec![u] }
    }

    fn index(&self, t: f64) -> usize {
        let k = self.breaks.partition_point(|&b| b <= t);
        k.saturating_sub(1).min(self.values.len() - 1)
    }
}

impl ControlSignal for PiecewiseConstantControl {
    fn value(&self, t: f64) -> DVector<f64> {
        self.values[self.index(t)].clone()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breaks.clone()
    }
}

/// Replaces each relaxed piece by a periodic switching among its atoms, each
/// atom holding for `weight · period` per cycle in atom order.
pub fn chatter_approximate(mu: &GeneralizedControl, period: f64) -> Result<PiecewiseConstantControl> {
    if !(period > 0.0 && period.is_finite()) {
        return config(format!("chattering period must be positive, got {period}"));
    }
    let mut breaks = vec![mu.pieces[0].start];
    let mut values = Vec::new();
    for (k, p) in mu.pieces.iter().enumerate() {
        let len = p.end - p.start;
        let cycles = (len / period).round();
        if cycles < 1.0 || (cycles * period - len).abs() > 1e-9 * len.max(1.0) {
            return config(format!("period {period} does not divide the length {len} of piece {k}"));
        }
        let cycles = cycles as usize;
        for c in 0..cycles {
            let c0 = p.start + len * c as f64 / cycles as f64;
            let c1 = if c + 1 == cycles { p.end } else { p.start + len * (c + 1) as f64 / cycles as f64 };
            let mut acc = 0.0;
            let active: Vec<&Atom> = p.atoms.iter().filter(|a| a.weight > 0.0).collect();
            for (i, a) in active.iter().enumerate() {
                acc += a.weight;
                let end = if i + 1 == active.len() { c1 } else { c0 + (c1 - c0) * acc };
                if end > *breaks.last().unwrap() {
                    breaks.push(end);
                    values.push(a.point.clone());
                }
            }
        }
    }
    PiecewiseConstantControl::new(breaks, values)
}
