//! Finite-time distributed solvers for linear equations `Ax = b` over
//! undirected agent networks.
//!
//! Three sign-driven flows are provided:
//!
//! * a projection-consensus flow that drives every agent to one common
//!   solution of `Ax = b`,
//! * a centralized projected subgradient flow on `‖x‖₁` that reaches the
//!   minimum l1-norm solution,
//! * a distributed combination of the two, weighted by a gain schedule
//!   `k(t)`, that reaches the minimum l1-norm solution at every agent.
//!
//! The flows are differential inclusions with discontinuous right-hand
//! sides. [`integrator`] advances them with fixed steps and picks the sign
//! selection either explicitly (with a dead zone) or consistently with the
//! end-of-step state, which removes chattering. [`oracle`] solves the same
//! problems as linear programs so every limit can be checked independently.

pub mod boxqp;
pub mod error;
pub mod experiment;
pub mod filippov;
pub mod graph;
pub mod integrator;
pub mod linalg;
pub mod oracle;

pub use error::{Error, Result};
pub use experiment::{
    fixture_paper_4agent, load_config, run_experiment, write_outputs, ExperimentConfig, RunSummary,
};
pub use filippov::{
    delta_bound_estimate, delta_bound_from_blocks, edge_selections, k_schedule, rhs_centralized_l1,
    rhs_consensus, rhs_distributed_l1, sgn_select, BoundEstimate, BoundRegime, FlowKind, FlowSpec,
    KSchedule, ScheduleKind, SignSelection, ZeroRule,
};
pub use graph::Network;
pub use integrator::{
    consensus_residual, integrate, stationarity_gap, IntegratorOptions, SelectionPolicy,
    StackedState, StopCriterion, StopKind, Trajectory,
};
pub use linalg::{
    feasible_init, has_full_row_rank, kernel_projector, numerical_rank, stack_and_expand,
    DenseMatrix, InitMode, PartitionedSystem, Projector,
};
pub use oracle::{
    any_solution, min_l1_lp, vertex_enum_oracle, L1Certificate, OracleMethod, Uniqueness,
};
