//! Multi-block convex minimization under linear coupling constraints
//!
//! ```text
//! minimize  Σ_k f_k(x_k)   subject to  Σ_k E_k x_k = q,  x_k ∈ X_k
//! ```
//!
//! solved by an augmented decomposition scheme (exact and inexact), with
//! ADMM-family baselines and diagnostics for the convergence behaviour.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod ada;
pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod iada;
pub mod linalg;
pub mod model;
pub mod solvers;

pub use ada::{run, StepMetrics, StopMode, Trace};
pub use error::{Error, Result};
pub use iada::{iada_run, InexactSchedule, ScheduleKind};
pub use model::{BlockSpec, FunctionDescriptor, IterateState, Problem, SolverParams};
