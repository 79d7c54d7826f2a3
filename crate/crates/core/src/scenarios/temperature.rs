use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{parse_f64, positive, unknown, ScenarioParams};
use crate::dynamics::ControlSetSpec;
use crate::error::{config, Result};
use crate::nonsmooth::Crossing;
use crate::stochastic::{CostSpec, Linearization, ModeSchedule, ReductionConfig, StochasticHybridSystem, StochasticMode, Switching, ThresholdEdge};

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub lambda: f64,
    pub t_low: f64,
    pub t_high: f64,
    pub x_d: f64,
    pub x0: f64,
    pub horizon: f64,
    pub u_max: f64,
    /// Terminal state used for the adjoint terminal data; `x_d` if unset.
    pub x_terminal: Option<f64>,
}

impl Default for TemperatureParams {
    fn default() -> Self {
        Self {
            alpha1: 0.5,
            alpha2: 0.6,
            beta1: 1.0,
            beta2: 0.8,
            sigma1: 0.2,
            sigma2: 0.25,
            lambda: 0.1,
            t_low: 18.0,
            t_high: 22.0,
            x_d: 20.0,
            x0: 19.0,
            horizon: 10.0,
            u_max: 5.0,
            x_terminal: None,
        }
    }
}

impl TemperatureParams {
    pub fn alphas(&self) -> Vec<f64> {
        vec![self.alpha1, self.alpha2]
    }

    /// Heating if the start is below the target, cooling otherwise.
    pub fn initial_mode(&self) -> usize {
        usize::from(self.x0 > self.x_d)
    }
}

impl ScenarioParams for TemperatureParams {
    fn keys() -> &'static [&'static str] {
        &["alpha1", "alpha2", "beta1", "beta2", "sigma1", "sigma2", "lambda", "t_low", "t_high", "x_d", "x0", "horizon", "u_max", "x_terminal"]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = parse_f64(key, value)?;
        match key {
            "alpha1" => self.alpha1 = v,
            "alpha2" => self.alpha2 = v,
            "beta1" => self.beta1 = v,
            "beta2" => self.beta2 = v,
            "sigma1" => self.sigma1 = v,
            "sigma2" => self.sigma2 = v,
            "lambda" => self.lambda = v,
            "t_low" => self.t_low = v,
            "t_high" => self.t_high = v,
            "x_d" => self.x_d = v,
            "x0" => self.x0 = v,
            "horizon" => self.horizon = v,
            "u_max" => self.u_max = v,
            "x_terminal" => self.x_terminal = Some(v),
            _ => return unknown(key, Self::keys()),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("alpha1", self.alpha1.to_string()),
            ("alpha2", self.alpha2.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("sigma1", self.sigma1.to_string()),
            ("sigma2", self.sigma2.to_string()),
            ("lambda", self.lambda.to_string()),
            ("t_low", self.t_low.to_string()),
            ("t_high", self.t_high.to_string()),
            ("x_d", self.x_d.to_string()),
            ("x0", self.x0.to_string()),
            ("horizon", self.horizon.to_string()),
            ("u_max", self.u_max.to_string()),
        ];
        if let Some(x) = self.x_terminal {
            out.push(("x_terminal", x.to_string()));
        }
        out
    }

    fn validate(&self) -> Result<()> {
        for (k, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2), ("lambda", self.lambda), ("horizon", self.horizon)] {
            positive(k, v)?;
        }
        for (k, v) in [("sigma1", self.sigma1), ("sigma2", self.sigma2), ("u_max", self.u_max), ("beta1", self.beta1), ("beta2", self.beta2)] {
            if v < 0.0 {
                return config(format!("{k} must be nonnegative, got {v}"));
            }
        }
        if !(self.t_low < self.t_high) {
            return config("t_low must be below t_high");
        }
        Ok(())
    }
}

fn mode(name: &str, alpha: f64, beta: f64, sigma: f64, u_max: f64) -> Result<StochasticMode> {
    Ok(StochasticMode {
        name: name.into(),
        drift: Arc::new(move |_t, x: &DVector<f64>, u: &DVector<f64>| DVector::from_element(1, alpha * (u[0] - x[0]) + beta)),
        drift_x: Arc::new(move |_t, _x: &DVector<f64>, _u: &DVector<f64>| DMatrix::from_element(1, 1, -alpha)),
        drift_u: Arc::new(move |_t, _x: &DVector<f64>, _u: &DVector<f64>| DMatrix::from_element(1, 1, alpha)),
        diffusion: Arc::new(move |_t, x: &DVector<f64>, _u: &DVector<f64>| DMatrix::from_element(1, 1, sigma * x[0])),
        diffusion_x: Arc::new(move |_t, _x: &DVector<f64>, _u: &DVector<f64>| vec![DMatrix::from_element(1, 1, sigma)]),
        control_set: ControlSetSpec::interval(0.0, u_max)?,
    })
}

/// Heating (mode 0) and cooling (mode 1) with switches at `t_high` and `t_low`.
pub fn temperature_system(p: &TemperatureParams) -> Result<StochasticHybridSystem> {
    p.validate()?;
    let (hi, lo) = (p.t_high, p.t_low);
    let grad = |_x: &DVector<f64>| DVector::from_element(1, 1.0);
    let edges = vec![
        ThresholdEdge { from: 0, to: 1, guard: Arc::new(move |x: &DVector<f64>| x[0] - hi), guard_grad: Arc::new(grad), crossing: Crossing::Rising },
        ThresholdEdge { from: 1, to: 0, guard: Arc::new(move |x: &DVector<f64>| x[0] - lo), guard_grad: Arc::new(grad), crossing: Crossing::Falling },
    ];
    StochasticHybridSystem::new(
        1,
        1,
        vec![mode("heating", p.alpha1, p.beta1, p.sigma1, p.u_max)?, mode("cooling", p.alpha2, -p.beta2, p.sigma2, p.u_max)?],
        Switching::Threshold(edges),
        (0.0, p.horizon),
    )
}

/// `(x(T) − x_d)² + λ∫u² dt`.
pub fn temperature_cost(p: &TemperatureParams) -> Result<CostSpec> {
    CostSpec::quadratic_tracking(DVector::from_element(1, p.x_d), p.lambda)
}

/// Linearisation about `x_d` in the initial mode.
pub fn temperature_reduction(p: &TemperatureParams, dt: f64) -> ReductionConfig {
    let mut cfg = ReductionConfig::new(dt, Linearization::Constant(DVector::from_element(1, p.x_d)), ModeSchedule::Constant(p.initial_mode()));
    cfg.terminal_state = p.x_terminal.map(|x| DVector::from_element(1, x));
    cfg
}
