//! Quadratic programming: a small dense active-set solver and the
//! step-adjustment problem built on it.

pub mod active_set;
pub mod problem;
pub mod stab;

pub use active_set::{solve_active_set, solve_with, ActiveSetOptions};
pub use problem::{KktReport, QpError, QpProblem, QpSolution};
