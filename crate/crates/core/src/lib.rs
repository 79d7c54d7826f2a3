//! Relaxed, Filippov, hybrid and stochastic-hybrid control systems, with
//! numerical checks of Λ-set optimality certificates.
//!
//! The crate is organised bottom-up:
//!
//! * [`dynamics`]: control systems, control sets, relaxed controls, RK4
//!   integration and Hamiltonian maximisation.
//! * [`first_order`] and [`second_order`]: adjoint propagation, certificate
//!   residuals and grid searches.
//! * [`nonsmooth`]: Filippov systems and hybrid automata with adjoint jumps.
//! * [`stochastic`]: Euler–Maruyama ensembles, reduced adjoints, Monte Carlo
//!   costs and paired variation tests.
//! * [`scenarios`]: the four built-in worked examples and the oscillating
//!   control convergence study.

pub mod dynamics;
pub mod error;
pub mod first_order;
pub mod linalg;
pub mod nonsmooth;
pub mod report;
pub mod scenarios;
pub mod second_order;
pub mod stochastic;

pub use nalgebra::{DMatrix, DVector};

pub use dynamics::{
    chatter_approximate, eval_convexified_drift, eval_vector_field, hamiltonian_eval,
    hamiltonian_max, integrate_ode, integrate_ode_with_breaks, trajectory_distance, Atom,
    ControlPiece, ControlSetSpec, ControlSignal, ControlSystem, DistanceNorm, Event, EventKind,
    EventPayload, GeneralizedControl, MaxConfig, ModeDynamics, PiecewiseConstantControl,
    SimConfig, Trajectory,
};
pub use error::{Error, Result};
pub use report::{CertificateReport, Sense, Verdict};
