//! System definitions, relaxed controls, Hamiltonians and RK4 integration.

mod control_set;
mod hamiltonian;
mod integrate;
mod relaxed;
mod system;
mod trajectory;

pub use control_set::{lex_cmp, ControlSetSpec, MaxConfig};
pub use hamiltonian::{argmax_over, hamiltonian_eval, hamiltonian_max};
pub(crate) use hamiltonian::{affine_max, mode_max};
pub use integrate::{
    integrate_ode, integrate_ode_with_breaks, rk4_step, simulate_control, time_grid, SimConfig,
};
pub(crate) use integrate::march;
pub use relaxed::{
    averaged_hessians, averaged_jacobian, chatter_approximate, eval_convexified_drift, Atom,
    ControlPiece, ControlSignal, FnControl, GeneralizedControl, PiecewiseConstantControl,
};
pub use system::{
    eval_vector_field, fd_jacobian, AffineSplitFn, ControlSystem, FieldFn, HessianFn, JacobianFn,
    JacobianSplitFn,
    ModeDynamics,
};
pub use trajectory::{trajectory_distance, DistanceNorm, Event, EventKind, EventPayload, Trajectory};
