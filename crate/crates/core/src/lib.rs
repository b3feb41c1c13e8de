//! Discounted two-player zero-sum hybrid differential games with switching
//! and impulse controls: problem loading, a semi-Lagrangian solver for the
//! quasi-variational inequality, closed-loop simulation and verification.

pub mod cli;
pub mod config;
pub mod exprlang;
pub mod hybridsim;
pub mod io;
pub mod operators;
pub mod problem;
pub mod report;
pub mod solver;
pub mod verify;

pub use config::{load_config, parse_config, Config, ConfigError};
pub use exprlang::{parse, Expr, ExprError, Var};
pub use operators::{HamiltonianVariant, SchemeError, SemiLagrangian};
pub use problem::{load_spec, ProblemSpec};
pub use solver::{solve, GridSpec, SolverConfig, ValueField};
