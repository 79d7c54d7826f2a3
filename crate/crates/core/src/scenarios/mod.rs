//! Built-in worked examples with their reference pairs and closed forms,
//! plus the oscillating-control convergence study.

mod bouncing_ball;
mod convergence;
mod friction;
mod nonholonomic;
mod temperature;

use std::fmt;
use std::str::FromStr;

use crate::error::{config, Error, Result};

pub use bouncing_ball::{
    bouncing_ball_automaton, bouncing_ball_reference, bouncing_candidate_psi0, free_fall_impact, simulate_bouncing_ball,
    BouncingBallParams, BouncingBallRun, SOFT, HARD,
};
pub use convergence::{fit_loglog, omega_root_find, run_convergence_study, ConvergenceRow, ConvergenceStudy, RootFind, SlopeFit};
pub use friction::{
    friction_reference, friction_system, pulse_checkpoints, pulse_train, simulate_pulse_train, sliding_control, FrictionParams,
};
pub use nonholonomic::{
    closed_form, default_second_order_grid, four_atom_control, nonholonomic_reference, nonholonomic_system,
    oscillating_control, simulate_oscillation, NonholonomicParams, ReferenceVariant,
};
pub use temperature::{temperature_cost, temperature_reduction, temperature_system, TemperatureParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Nonholonomic,
    Friction,
    BouncingBall,
    Temperature,
}

impl Builtin {
    pub const ALL: [Builtin; 4] = [Self::Nonholonomic, Self::Friction, Self::BouncingBall, Self::Temperature];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nonholonomic => "nonholonomic",
            Self::Friction => "friction",
            Self::BouncingBall => "bouncing-ball",
            Self::Temperature => "temperature",
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown builtin '{s}' (expected one of nonholonomic, friction, bouncing-ball, temperature)")))
    }
}

/// Parameter block of one builtin, settable from `key = value` text.
pub trait ScenarioParams: Default {
    fn keys() -> &'static [&'static str];
    fn set(&mut self, key: &str, value: &str) -> Result<()>;
    /// `(key, value)` pairs with defaults applied.
    fn entries(&self) -> Vec<(&'static str, String)>;
    fn validate(&self) -> Result<()>;
}

pub(crate) fn parse_f64(key: &str, value: &str) -> Result<f64> {
    match value.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => config(format!("{key}: expected a finite number, got '{value}'")),
    }
}

pub(crate) fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        config(format!("{key} must be positive, got {v}"))
    }
}

pub(crate) fn unknown<T>(key: &str, keys: &[&str]) -> Result<T> {
    config(format!("unknown parameter '{key}' (expected one of {})", keys.join(", ")))
}
