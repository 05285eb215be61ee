//! Calculus of variations on isolated time scales.
//!
//! The crate evaluates delta derivatives and delta integrals exactly on
//! isolated scales (`ℤ`, `hℤ`, `q^ℕ₀`, general affine jumps, explicit point
//! sequences), checks Euler–Lagrange residuals and transversality conditions
//! of higher-order infinite-horizon problems, probes weak maximality by
//! truncated-horizon scans, and fits candidate extremals over a user-supplied
//! basis.
//!
//! Infinite horizons are always handled by truncation. Verdicts produced here
//! are numerical evidence about a candidate, never a proof of optimality.

pub mod calculus;
pub mod error;
pub mod exec;
pub mod exprlang;
pub mod solver;
pub mod timescale;
pub mod variational;

pub use calculus::{
    commutation_residual, delta_derivative, delta_integral, ibp_residual, ibp_terms, mixed_eval, IbpTerms,
    Trajectory,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use solver::{BasisAnsatz, FamilyAnalysis, SolveOptions, SolveReport};
pub use timescale::{fit_condition_h, ConditionHFit, ScaleKind, ScaleSpec, TimeScale};
pub use variational::{Horizon, Lagrangian, Problem, TruncationScan, Verdict};
