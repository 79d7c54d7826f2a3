//! Stochastic hybrid systems: Euler–Maruyama ensembles, the reduced adjoint
//! equations, Monte Carlo costs and paired variation tests.

mod adjoint;
mod cost;
mod system;

pub use adjoint::{
    check_stochastic_candidate, feedback_control_law, reduced_adjoint_propagate, stochastic_hamiltonian,
    ClampedFeedback, GammaProcess, Linearization, ModeSchedule, ReductionConfig, StochasticCandidate,
};
pub use cost::{
    monte_carlo_cost, variation_cost_test, CostEstimate, CostSpec, PerturbedControl, VariationRow,
};
pub use system::{
    path_rng, simulate_paths, DiffusionFn, DiffusionJacobianFn, EnsembleConfig, FeedbackFn, IntensityFn,
    OpenLoop, PathEnsemble, StochasticControl, StochasticHybridSystem, StochasticMode, Switching,
    ThresholdEdge,
};
