use nalgebra::DVector;

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    GuardCross,
    Impact,
    SlidingEnter,
    SlidingExit,
    ModeSwitch,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::GuardCross => "guard-cross",
            Self::Impact => "impact",
            Self::SlidingEnter => "sliding-enter",
            Self::SlidingExit => "sliding-exit",
            Self::ModeSwitch => "mode-switch",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventPayload {
    /// Index of the hybrid edge that fired, if any.
    pub edge: Option<usize>,
    pub from_mode: usize,
    pub to_mode: usize,
    pub state_before: DVector<f64>,
    pub state_after: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Grid index of the sample at `time`, which holds the post-event state.
    pub index: usize,
    pub payload: EventPayload,
}

/// Sampled solution with mode labels, controls and an event log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub modes: Vec<usize>,
    /// Control applied from each sample onwards; empty when not recorded.
    pub controls: Vec<DVector<f64>>,
    /// Right derivative at each sample; present with dense output.
    pub derivatives: Option<Vec<DVector<f64>>>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn from_samples(times: Vec<f64>, states: Vec<DVector<f64>>) -> Result<Self> {
        let modes = vec![0; times.len()];
        let tr = Self { times, states, modes, ..Default::default() };
        tr.validate()?;
        Ok(tr)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.states.len() || self.modes.len() != self.times.len() {
            return config("trajectory times, states and modes must have equal length");
        }
        if !self.controls.is_empty() && self.controls.len() != self.times.len() {
            return config("trajectory controls must be empty or match the grid");
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return config("trajectory times must increase strictly");
        }
        if let (Some(a), Some(b)) = (self.times.first(), self.times.last()) {
            if self.events.iter().any(|e| e.time < *a || e.time > *b) {
                return config("event time outside the trajectory span");
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }

    /// Event recorded at grid index `k`, if any.
    pub fn event_at(&self, k: usize) -> Option<&Event> {
        self.events.iter().find(|e| e.index == k)
    }

    /// Left limit of the state at grid index `k`.
    pub fn left_state(&self, k: usize) -> &DVector<f64> {
        match self.event_at(k) {
            Some(e) => &e.payload.state_before,
            None => &self.states[k],
        }
    }

    /// Mode in force just before grid index `k`.
    pub fn left_mode(&self, k: usize) -> usize {
        match self.event_at(k) {
            Some(e) => e.payload.from_mode,
            None if k > 0 => self.modes[k - 1],
            None => self.modes[k],
        }
    }

    /// Velocity at grid index `k`: stored derivative if present, otherwise a
    /// finite difference (central inside, one-sided at the ends).
    pub fn velocity(&self, k: usize) -> DVector<f64> {
        if let Some(d) = &self.derivatives {
            return d[k].clone();
        }
        let n = self.len();
        if n < 2 {
            return DVector::zeros(self.state_dim());
        }
        let (a, b) = if k == 0 {
            (0, 1)
        } else if k == n - 1 {
            (n - 2, n - 1)
        } else {
            (k - 1, k + 1)
        };
        (&self.states[b] - &self.states[a]) / (self.times[b] - self.times[a])
    }

    /// State at time `t`: cubic Hermite with dense output, linear otherwise.
    pub fn sample(&self, t: f64) -> DVector<f64> {
        let n = self.len();
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let x0 = &self.states[k];
        let x1 = self.left_state(k + 1);
        match &self.derivatives {
            Some(d) if self.event_at(k + 1).is_none() => {
                let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
                let h10 = s * s * s - 2.0 * s * s + s;
                let h01 = -2.0 * s * s * s + 3.0 * s * s;
                let h11 = s * s * s - s * s;
                x0 * h00 + &d[k] * (h10 * h) + x1 * h01 + &d[k + 1] * (h11 * h)
            }
            _ => x0 * (1.0 - s) + x1 * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceNorm {
    C0,
    C1,
}

/// Sup-norm distance (`C0`) or `C0` plus the sup of forward-difference
/// derivative differences (`C1`) between two trajectories on one grid.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory, norm: DistanceNorm) -> Result<f64> {
    if a.len() != b.len() {
        return config(format!("trajectories have {} and {} samples", a.len(), b.len()));
    }
    if a.state_dim() != b.state_dim() {
        return config(format!("trajectories have state dims {} and {}", a.state_dim(), b.state_dim()));
    }
    for (ta, tb) in a.times.iter().zip(&b.times) {
        if (ta - tb).abs() > 1e-12 * (1.0 + ta.abs()) {
            return config("trajectories must share the same grid; resample first");
        }
    }
    let diff: Vec<DVector<f64>> = a.states.iter().zip(&b.states).map(|(x, y)| x - y).collect();
    let c0 = diff.iter().map(|d| d.norm()).fold(0.0, f64::max);
    match norm {
        DistanceNorm::C0 => Ok(c0),
        DistanceNorm::C1 => {
            let c1 = (0..diff.len().saturating_sub(1))
                .map(|k| ((&diff[k + 1] - &diff[k]) / (a.times[k + 1] - a.times[k])).norm())
                .fold(0.0, f64::max);
            Ok(c0 + c1)
        }
    }
}
