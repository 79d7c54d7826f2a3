//! Filippov systems, hybrid automata and adjoints with jump conditions.

mod adjoint;
mod hybrid;
mod surface;

pub use adjoint::{
    adjoint_with_jumps, check_nonsmooth_candidate, search_nonsmooth, AdjointMatrixFn, FilippovReference,
    HybridReference, JumpAdjointFlow, JumpAdjointState, JumpRecord, JumpSpec, NonsmoothReference,
    NonsmoothSearchResult,
};
pub use hybrid::{
    condition_number, simulate_hybrid, Crossing, Edge, HybridAutomaton, HybridControl, HybridFnControl,
    ResetFn, ResetJacobianFn, SignalControl,
};
pub use surface::{
    filippov_set_eval, simulate_filippov, DiscontinuitySurface, FilippovSelection, FilippovSet, FilippovSystem,
    GradFn, ScalarFn, LOWER, SLIDING, UPPER,
};
