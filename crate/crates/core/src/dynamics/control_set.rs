use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{config, Result};

const MEMBERSHIP_TOL: f64 = 1e-9;

/// Admissible control values of one mode.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSetSpec {
    /// Finitely many points, kept in lexicographic order.
    FiniteSet(Vec<DVector<f64>>),
    Interval { lo: f64, hi: f64 },
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// The sphere `‖u‖ = radius` in `dim` dimensions (a circle for `dim = 2`).
    Sphere { dim: usize, radius: f64 },
}

/// Resolution of the grid used when no analytic maximiser applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxConfig {
    pub grid_fallback: bool,
    pub sphere_samples: usize,
    pub box_per_axis: usize,
}

impl Default for MaxConfig {
    fn default() -> Self {
        Self { grid_fallback: true, sphere_samples: 720, box_per_axis: 64 }
    }
}

/// Lexicographic order on control vectors.
pub fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

impl ControlSetSpec {
    pub fn finite(mut points: Vec<DVector<f64>>) -> Result<Self> {
        if points.is_empty() {
            return config("finite control set must be nonempty");
        }
        let d = points[0].len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return config("finite control set points must share a positive dimension");
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return config("finite control set points must be finite");
        }
        points.sort_by(lex_cmp);
        points.dedup();
        Ok(Self::FiniteSet(points))
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return config(format!("interval requires finite lo <= hi, got [{lo}, {hi}]"));
        }
        Ok(Self::Interval { lo, hi })
    }

    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return config("box bounds must share a positive dimension");
        }
        if lo.iter().zip(hi.iter()).any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
            return config("box requires finite lo <= hi componentwise");
        }
        Ok(Self::Box { lo, hi })
    }

    pub fn sphere(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return config("sphere dimension must be positive");
        }
        if !(radius.is_finite() && radius > 0.0) {
            return config(format!("sphere radius must be positive, got {radius}"));
        }
        Ok(Self::Sphere { dim, radius })
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::FiniteSet(p) => p[0].len(),
            Self::Interval { .. } => 1,
            Self::Box { lo, .. } => lo.len(),
            Self::Sphere { dim, .. } => *dim,
        }
    }

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        if u.len() != self.dimension() || u.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Self::FiniteSet(points) => points.iter().any(|p| {
                (p - u).amax() <= MEMBERSHIP_TOL * (1.0 + p.amax())
            }),
            Self::Interval { lo, hi } => {
                let tol = MEMBERSHIP_TOL * (1.0 + lo.abs().max(hi.abs()));
                u[0] >= lo - tol && u[0] <= hi + tol
            }
            Self::Box { lo, hi } => (0..u.len()).all(|i| {
                let tol = MEMBERSHIP_TOL * (1.0 + lo[i].abs().max(hi[i].abs()));
                u[i] >= lo[i] - tol && u[i] <= hi[i] + tol
            }),
            Self::Sphere { radius, .. } => (u.norm() - radius).abs() <= MEMBERSHIP_TOL * radius.max(1.0),
        }
    }

    /// Nearest point of the set; points already inside are returned unchanged.
    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::FiniteSet(points) => {
                let mut best = &points[0];
                let mut d = (best - u).norm();
                for p in &points[1..] {
                    let dp = (p - u).norm();
                    if dp < d {
                        best = p;
                        d = dp;
                    }
                }
                best.clone()
            }
            Self::Interval { lo, hi } => DVector::from_element(1, u[0].clamp(*lo, *hi)),
            Self::Box { lo, hi } => DVector::from_iterator(u.len(), (0..u.len()).map(|i| u[i].clamp(lo[i], hi[i]))),
            Self::Sphere { dim, radius } => {
                let n = u.norm();
                if n == *radius {
                    u.clone()
                } else if n == 0.0 {
                    let mut e = DVector::zeros(*dim);
                    e[0] = *radius;
                    e
                } else {
                    u * (*radius / n)
                }
            }
        }
    }

    /// Candidate points scanned by the grid maximiser. Always includes the
    /// extreme points of polyhedral sets.
    pub fn grid(&self, cfg: &MaxConfig) -> Vec<DVector<f64>> {
        match self {
            Self::FiniteSet(p) => p.clone(),
            Self::Interval { lo, hi } => linspace(*lo, *hi, cfg.box_per_axis.max(2))
                .into_iter()
                .map(|v| DVector::from_element(1, v))
                .collect(),
            Self::Box { lo, hi } => {
                let axes: Vec<Vec<f64>> = (0..lo.len())
                    .map(|i| linspace(lo[i], hi[i], cfg.box_per_axis.max(2)))
                    .collect();
                cartesian(&axes)
            }
            Self::Sphere { dim, radius } => sphere_points(*dim, *radius, cfg.sphere_samples.max(4)),
        }
    }

    /// Points whose convex hull is (or, for spheres, approximates) the hull
    /// of the set.
    pub fn extreme_points(&self, cfg: &MaxConfig) -> Vec<DVector<f64>> {
        match self {
            Self::FiniteSet(p) => p.clone(),
            Self::Interval { lo, hi } => {
                let mut v = vec![DVector::from_element(1, *lo)];
                if hi > lo {
                    v.push(DVector::from_element(1, *hi));
                }
                v
            }
            Self::Box { lo, hi } => {
                let axes: Vec<Vec<f64>> = (0..lo.len())
                    .map(|i| if hi[i] > lo[i] { vec![lo[i], hi[i]] } else { vec![lo[i]] })
                    .collect();
                cartesian(&axes)
            }
            Self::Sphere { .. } => self.grid(cfg),
        }
    }

    /// Draws a point of the set; uniform for intervals, boxes and finite
    /// sets, uniform in angle for spheres.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            Self::FiniteSet(p) => p[rng.random_range(0..p.len())].clone(),
            Self::Interval { lo, hi } => DVector::from_element(1, lo + (hi - lo) * rng.random::<f64>()),
            Self::Box { lo, hi } => {
                DVector::from_iterator(lo.len(), (0..lo.len()).map(|i| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>()))
            }
            Self::Sphere { dim, radius } => loop {
                let v = DVector::from_iterator(*dim, (0..*dim).map(|_| 2.0 * rng.random::<f64>() - 1.0));
                let n = v.norm();
                if n > 1e-3 && n <= 1.0 {
                    break v * (*radius / n);
                }
            },
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if b <= a {
        return vec![a];
    }
    (0..n)
        .map(|k| if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 })
        .collect()
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<DVector<f64>> {
    let mut out: Vec<Vec<f64>> = vec![vec![]];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(DVector::from_vec).collect()
}

fn sphere_points(dim: usize, radius: f64, samples: usize) -> Vec<DVector<f64>> {
    match dim {
        1 => vec![DVector::from_element(1, -radius), DVector::from_element(1, radius)],
        2 => (0..samples)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / samples as f64;
                DVector::from_vec(vec![radius * a.cos(), radius * a.sin()])
            })
            .collect(),
        _ => {
            let steps = ((samples as f64).sqrt().ceil() as usize).max(8);
            crate::first_order::SphereGrid::new(dim, steps)
                .points()
                .into_iter()
                .map(|p| p * radius)
                .collect()
        }
    }
}
