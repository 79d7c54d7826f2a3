use nalgebra::DVector;

use super::nonholonomic::simulate_oscillation;
use crate::dynamics::{trajectory_distance, DistanceNorm, Trajectory};
use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub omega: f64,
    /// `1 − ε²`.
    pub horizon: f64,
    pub c0: f64,
    pub c1: f64,
    /// `|x₃(1 − ε²) − 1|`.
    pub terminal_defect: f64,
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `R² ≥ 0.99`.
    pub clean: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootFind {
    pub epsilon: f64,
    /// Whether the scan found a sign change of `x₃(1 − ε²) − 1`.
    pub bracketed: bool,
    pub omega: f64,
    pub residual: f64,
    /// `|residual| ≤ 1e-6`.
    pub attained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub c0_fit: SlopeFit,
    pub c1_fit: SlopeFit,
    pub terminal_fit: SlopeFit,
    pub root_finds: Vec<RootFind>,
}

pub fn fit_loglog(x: &[f64], y: &[f64]) -> SlopeFit {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return SlopeFit { slope: f64::NAN, intercept: f64::NAN, r_squared: f64::NAN, clean: false };
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { f64::NAN };
    SlopeFit { slope, intercept, r_squared, clean: r_squared >= 0.99 }
}

fn reference_on(tr: &Trajectory) -> Result<Trajectory> {
    let states = tr.times.iter().map(|&t| DVector::from_vec(vec![0.0, 0.0, t])).collect();
    Trajectory::from_samples(tr.times.clone(), states)
}

fn terminal_x3(epsilon: f64, omega: f64, dt: f64) -> Result<f64> {
    let horizon = 1.0 - epsilon * epsilon;
    let period = std::f64::consts::TAU * epsilon / omega;
    let tr = simulate_oscillation(epsilon, omega, horizon, dt.min(period / 64.0))?;
    Ok(tr.final_state().map(|x| x[2]).unwrap_or(f64::NAN))
}

/// Scans `ω` log-uniformly over `bracket` for `x₃(1 − ε²) = 1`, bisecting
/// the first sign change; otherwise reports the smallest scanned residual.
pub fn omega_root_find(epsilon: f64, bracket: (f64, f64), dt: f64, scan: usize) -> Result<RootFind> {
    if !(bracket.0 > 0.0 && bracket.1 > bracket.0) || scan < 2 {
        return config("omega bracket must be positive and increasing, with at least 2 scan points");
    }
    let f = |w: f64| terminal_x3(epsilon, w, dt).map(|x| x - 1.0);
    let (la, lb) = (bracket.0.ln(), bracket.1.ln());
    let omegas: Vec<f64> = (0..scan).map(|k| (la + (lb - la) * k as f64 / (scan - 1) as f64).exp()).collect();
    let values = omegas.iter().map(|&w| f(w)).collect::<Result<Vec<f64>>>()?;
    for k in 0..scan - 1 {
        if values[k] == 0.0 {
            return Ok(RootFind { epsilon, bracketed: true, omega: omegas[k], residual: 0.0, attained: true });
        }
        if values[k].signum() != values[k + 1].signum() {
            let (mut a, mut b, mut fa) = (omegas[k], omegas[k + 1], values[k]);
            let mut mid = 0.5 * (a + b);
            let mut fm = f(mid)?;
            for _ in 0..200 {
                if (b - a) <= 1e-12 * b || fm == 0.0 {
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
                mid = 0.5 * (a + b);
                fm = f(mid)?;
            }
            return Ok(RootFind { epsilon, bracketed: true, omega: mid, residual: fm, attained: fm.abs() <= 1e-6 });
        }
    }
    let (k, r) = values.iter().enumerate().fold((0, f64::INFINITY), |(bk, br), (k, &v)| if v.abs() < br.abs() { (k, v) } else { (bk, br) });
    Ok(RootFind { epsilon, bracketed: false, omega: omegas[k], residual: r, attained: r.abs() <= 1e-6 })
}

/// Oscillating controls with `ω = ratio·ε` against `x̂(t) = (0, 0, t)` on
/// `[0, 1 − ε²]`.
pub fn run_convergence_study(epsilons: &[f64], omega_ratio: f64, dt: f64, bracket: (f64, f64), scan: usize) -> Result<ConvergenceStudy> {
    if epsilons.len() < 4 {
        return config("convergence study needs at least 4 epsilon values");
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return config("epsilons must decrease strictly and lie in (0, 1)");
    }
    if epsilons[0] / epsilons[epsilons.len() - 1] < 10.0 {
        return config("epsilons must span at least one decade");
    }
    if !(omega_ratio > 0.0) {
        return config("omega ratio must be positive");
    }
    let mut rows = Vec::with_capacity(epsilons.len());
    let mut root_finds = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let omega = omega_ratio * eps;
        let horizon = 1.0 - eps * eps;
        let tr = simulate_oscillation(eps, omega, horizon, dt)?;
        let xr = reference_on(&tr)?;
        let xt = tr.final_state().map(|x| x[2]).unwrap_or(f64::NAN);
        rows.push(ConvergenceRow {
            epsilon: eps,
            omega,
            horizon,
            c0: trajectory_distance(&tr, &xr, DistanceNorm::C0)?,
            c1: trajectory_distance(&tr, &xr, DistanceNorm::C1)?,
            terminal_defect: (xt - 1.0).abs(),
        });
        root_finds.push(omega_root_find(eps, bracket, dt, scan)?);
    }
    let e: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let col = |f: fn(&ConvergenceRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    Ok(ConvergenceStudy {
        c0_fit: fit_loglog(&e, &col(|r| r.c0)),
        c1_fit: fit_loglog(&e, &col(|r| r.c1)),
        terminal_fit: fit_loglog(&e, &col(|r| r.terminal_defect)),
        rows,
        root_finds,
    })
}
