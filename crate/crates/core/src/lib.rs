//! Bottleneck-based fair allocation of multiple resources.
//!
//! Users hold entitlements that sum to one and request resources in fixed
//! proportions. An allocation grants user i the fraction x_i of his request.
//! It is fair when no user has a justified complaint: each user either gets
//! his whole request or receives at least his entitlement of some resource
//! that is at capacity.
//!
//! [`solve`] computes such an allocation by following a barrier trajectory
//! ([`ode_solver`]) on a preprocessed instance ([`preprocess`]), and checks
//! the result with [`verifier`]. [`oracle`] provides independent enumeration
//! for small instances and [`drf`] the dominant-resource comparator.

pub mod compare;
pub mod drf;
pub mod exec;
pub mod fixtures;
pub mod io;
pub mod lp;
pub mod model;
pub mod ode_solver;
pub mod oracle;
pub mod preprocess;
pub mod rational;
pub mod verifier;

pub use exec::Execution;
pub use model::{
    Allocation, ColumnOrigin, Justification, LiftedInstance, ModelError, ProblemInstance, Solution, ToleranceConfig,
};
pub use ode_solver::{solve, solve_batch, SolveError, SolveOptions, SolveResult, Termination};
pub use verifier::{verify, VerificationReport};
