//! Exact-penalty diagnostics for constrained problems whose feasible set may be unbounded.

pub mod certifier;
pub mod constraint;
pub mod expr;
pub mod harness;
pub mod penalty;
pub mod problem;
pub mod solver;
pub mod variational;
