//! coordscope: stationary-solution discovery and coordination scheduling for
//! two-agent differentiable decision problems.
//!
//! The pipeline has four stages, each usable on its own:
//!
//! 1. [`problem`] defines twice-differentiable two-agent objectives over a
//!    decision horizon, including the built-in separation and coupling
//!    problems, in a fixed agent-major variable layout.
//! 2. [`search`] finds roots of the gradient with randomly initialized damped
//!    Newton iterations, deterministically seeded and deduplicated.
//! 3. [`classify`] tests Hessian subblocks for positive definiteness to
//!    determine the time-sets on which each solution is coordinated.
//! 4. [`planner`] solves the team's coordination-scheduling problem over the
//!    resulting interval family by exact water-filling.
//!
//! [`calculus`] provides the finite-difference oracles that back the
//! `check-derivatives` command, and [`runner`] orchestrates everything behind
//! the `coordscope` CLI.

pub mod calculus;
pub mod classify;
pub mod config;
pub mod error;
pub mod planner;
pub mod problem;
pub mod runner;
pub mod search;

pub use error::{Error, Result};
