use nalgebra::DVector;

use super::control_set::{lex_cmp, ControlSetSpec, MaxConfig};
use super::system::{ControlSystem, ModeDynamics};
use crate::error::{config, Error, Result};

pub fn hamiltonian_eval(
    system: &ControlSystem,
    mode: usize,
    t: f64,
    x: &DVector<f64>,
    psi: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    check_costate(system, psi)?;
    Ok(psi.dot(&super::system::eval_vector_field(system, mode, t, x, u)?))
}

fn check_costate(system: &ControlSystem, psi: &DVector<f64>) -> Result<()> {
    if psi.len() != system.state_dim {
        return config(format!("costate has {} entries, expected {}", psi.len(), system.state_dim));
    }
    Ok(())
}

/// `max_u ⟨ψ, f(t, x, u)⟩` and its lexicographically smallest maximiser.
pub fn hamiltonian_max(
    system: &ControlSystem,
    mode: usize,
    t: f64,
    x: &DVector<f64>,
    psi: &DVector<f64>,
    cfg: &MaxConfig,
) -> Result<(f64, DVector<f64>)> {
    check_costate(system, psi)?;
    system.check_state(x)?;
    let m = system.mode(mode)?;
    mode_max(m, t, x, psi, cfg)
}

pub(crate) fn mode_max(
    m: &ModeDynamics,
    t: f64,
    x: &DVector<f64>,
    psi: &DVector<f64>,
    cfg: &MaxConfig,
) -> Result<(f64, DVector<f64>)> {
    if let ControlSetSpec::FiniteSet(points) = &m.control_set {
        return Ok(argmax_over(points.iter(), |u| psi.dot(&m.eval(t, x, u))));
    }
    if let Some(split) = &m.affine_split {
        let (g0, g) = split(t, x);
        let c = g.tr_mul(psi);
        let base = psi.dot(&g0);
        return Ok(affine_max(&m.control_set, base, &c));
    }
    if !cfg.grid_fallback {
        return Err(Error::Capability(format!(
            "mode '{}' has no affine split and grid fallback is disabled",
            m.name
        )));
    }
    Ok(argmax_over(m.control_set.grid(cfg).iter(), |u| psi.dot(&m.eval(t, x, u))))
}

/// Ties within a relative 1e-12 of the running best go to the
/// lexicographically smaller control.
pub fn argmax_over<'a, I, F>(points: I, mut value: F) -> (f64, DVector<f64>)
where
    I: Iterator<Item = &'a DVector<f64>>,
    F: FnMut(&DVector<f64>) -> f64,
{
    let mut best: Option<(f64, &DVector<f64>)> = None;
    for u in points {
        let v = value(u);
        best = match best {
            None => Some((v, u)),
            Some((bv, bu)) => {
                let tol = 1e-12 * bv.abs().max(v.abs());
                if v > bv + tol || ((v - bv).abs() <= tol && lex_cmp(u, bu).is_lt()) {
                    Some((v, u))
                } else {
                    Some((bv, bu))
                }
            }
        };
    }
    let (v, u) = best.expect("nonempty candidate set");
    (v, u.clone())
}

/// Maximises `base + c·u` over a convex control set in closed form.
pub(crate) fn affine_max(set: &ControlSetSpec, base: f64, c: &DVector<f64>) -> (f64, DVector<f64>) {
    let pick = |ci: f64, lo: f64, hi: f64| {
        let tol = 1e-12 * (base.abs() + ci.abs() * (hi - lo).abs());
        if ci > tol {
            hi
        } else {
            lo
        }
    };
    let u = match set {
        ControlSetSpec::Interval { lo, hi } => DVector::from_element(1, pick(c[0], *lo, *hi)),
        ControlSetSpec::Box { lo, hi } => DVector::from_iterator(lo.len(), (0..lo.len()).map(|i| pick(c[i], lo[i], hi[i]))),
        ControlSetSpec::Sphere { dim, radius } => {
            let cn = c.norm();
            if cn > 1e-12 * (base.abs() + cn * radius) && cn > 0.0 {
                c * (*radius / cn)
            } else {
                let mut u = DVector::zeros(*dim);
                u[0] = -radius;
                u
            }
        }
        ControlSetSpec::FiniteSet(points) => {
            return argmax_over(points.iter(), |u| base + c.dot(u));
        }
    };
    (base + c.dot(&u), u)
}
