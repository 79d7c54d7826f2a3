use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::control_set::ControlSetSpec;
use crate::error::{config, Error, Result};

pub type FieldFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// One `n × n` Hessian per component of the vector field.
pub type HessianFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;
/// `(g0, G)` with `f(t, x, u) = g0(t, x) + G(t, x) u` for every `u` in the control set.
pub type AffineSplitFn = Arc<dyn Fn(f64, &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) + Send + Sync>;
/// `(J0, [J_1, …, J_r])` with `f_x(t, x, u) = J0 + Σ u_i J_i` for every `u` in the control set.
pub type JacobianSplitFn = Arc<dyn Fn(f64, &DVector<f64>) -> (DMatrix<f64>, Vec<DMatrix<f64>>) + Send + Sync>;

/// Vector field of one mode together with its derivatives.
#[derive(Clone)]
pub struct ModeDynamics {
    pub name: String,
    pub field: FieldFn,
    pub jacobian: JacobianFn,
    /// `None` means the field is affine in `x`.
    pub hessian: Option<HessianFn>,
    pub affine_split: Option<AffineSplitFn>,
    pub jacobian_split: Option<JacobianSplitFn>,
    pub control_set: ControlSetSpec,
}

impl fmt::Debug for ModeDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModeDynamics")
            .field("name", &self.name)
            .field("control_set", &self.control_set)
            .field("has_hessian", &self.hessian.is_some())
            .field("has_affine_split", &self.affine_split.is_some())
            .finish()
    }
}

impl ModeDynamics {
    pub fn new<F, J>(name: impl Into<String>, control_set: ControlSetSpec, field: F, jacobian: J) -> Self
    where
        F: Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J: Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            field: Arc::new(field),
            jacobian: Arc::new(jacobian),
            hessian: None,
            affine_split: None,
            jacobian_split: None,
            control_set,
        }
    }

    pub fn with_hessian<H>(mut self, h: H) -> Self
    where
        H: Fn(f64, &DVector<f64>, &DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub fn with_affine_split<A>(mut self, a: A) -> Self
    where
        A: Fn(f64, &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) + Send + Sync + 'static,
    {
        self.affine_split = Some(Arc::new(a));
        self
    }

    pub fn with_jacobian_split<A>(mut self, a: A) -> Self
    where
        A: Fn(f64, &DVector<f64>) -> (DMatrix<f64>, Vec<DMatrix<f64>>) + Send + Sync + 'static,
    {
        self.jacobian_split = Some(Arc::new(a));
        self
    }

    pub fn eval(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.field)(t, x, u)
    }

    pub fn jac(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (self.jacobian)(t, x, u)
    }

    pub fn hess(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> Vec<DMatrix<f64>> {
        match &self.hessian {
            Some(h) => h(t, x, u),
            None => vec![DMatrix::zeros(x.len(), x.len()); x.len()],
        }
    }
}

/// A mode-indexed family of controlled vector fields on a fixed horizon.
#[derive(Debug, Clone)]
pub struct ControlSystem {
    pub state_dim: usize,
    pub modes: Vec<ModeDynamics>,
    pub time_horizon: (f64, f64),
}

impl ControlSystem {
    pub fn new(state_dim: usize, modes: Vec<ModeDynamics>, time_horizon: (f64, f64)) -> Result<Self> {
        if state_dim == 0 {
            return config("state_dim must be at least 1");
        }
        if modes.is_empty() {
            return config("a control system needs at least one mode");
        }
        let (t1, t2) = time_horizon;
        if !(t1.is_finite() && t2.is_finite() && t1 < t2) {
            return config(format!("time horizon must satisfy t1 < t2, got [{t1}, {t2}]"));
        }
        let sys = Self { state_dim, modes, time_horizon };
        let x = DVector::zeros(state_dim);
        for (q, m) in sys.modes.iter().enumerate() {
            let u = m.control_set.extreme_points(&Default::default()).swap_remove(0);
            let f = m.eval(t1, &x, &u);
            let j = m.jac(t1, &x, &u);
            let h = m.hess(t1, &x, &u);
            if f.len() != state_dim || j.shape() != (state_dim, state_dim) {
                return config(format!("mode {q} callbacks disagree with state_dim {state_dim}"));
            }
            if h.len() != state_dim || h.iter().any(|hk| hk.shape() != (state_dim, state_dim)) {
                return config(format!("mode {q} Hessian disagrees with state_dim {state_dim}"));
            }
        }
        Ok(sys)
    }

    pub fn mode(&self, q: usize) -> Result<&ModeDynamics> {
        self.modes
            .get(q)
            .ok_or_else(|| Error::Config(format!("mode {q} out of range ({} modes)", self.modes.len())))
    }

    pub(crate) fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim {
            return config(format!("state has {} entries, expected {}", x.len(), self.state_dim));
        }
        Ok(())
    }

    /// Compares Jacobians and Hessians against central finite differences at
    /// random probes. Returns the worst relative error, or an invariant error
    /// when it exceeds `tol`.
    pub fn derivative_self_test(&self, probes: usize, seed: u64, tol: f64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t1, t2) = self.time_horizon;
        let n = self.state_dim;
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            for m in &self.modes {
                let t = t1 + (t2 - t1) * rng.random::<f64>();
                let x = DVector::from_iterator(n, (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0));
                let u = m.control_set.sample(&mut rng);
                let j = m.jac(t, &x, &u);
                let jfd = fd_jacobian(|y| m.eval(t, y, &u), &x);
                worst = worst.max((&j - &jfd).norm() / j.norm().max(1.0));
                let h = m.hess(t, &x, &u);
                for (k, hk) in h.iter().enumerate() {
                    let hfd = fd_jacobian(|y| m.jac(t, y, &u).row(k).transpose(), &x);
                    worst = worst.max((hk - &hfd).norm() / hk.norm().max(1.0));
                }
            }
        }
        if worst > tol {
            return Err(Error::Invariant(format!(
                "derivative self-test: relative error {worst:.3e} exceeds {tol:.1e}"
            )));
        }
        Ok(worst)
    }
}

/// Central finite-difference Jacobian of `f` at `x`.
pub fn fd_jacobian<F: Fn(&DVector<f64>) -> DVector<f64>>(f: F, x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let m = f(x).len();
    let mut j = DMatrix::zeros(m, n);
    for i in 0..n {
        let h = 1e-6 * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let d = (f(&xp) - f(&xm)) / (2.0 * h);
        j.set_column(i, &d);
    }
    j
}

pub fn eval_vector_field(
    system: &ControlSystem,
    mode: usize,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = system.mode(mode)?;
    system.check_state(x)?;
    if u.len() != m.control_set.dimension() {
        return config(format!("control has {} entries, expected {}", u.len(), m.control_set.dimension()));
    }
    if !m.control_set.contains(u) {
        return Err(Error::Domain(format!("control {:?} outside the control set of mode {mode}", u.as_slice())));
    }
    Ok(m.eval(t, x, u))
}
