#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod bbmre;
pub mod config;
pub mod envgen;
pub mod error;
pub mod experiments;
pub mod front;
pub mod hitting;
pub mod kppsolve;
pub mod lyapunov;
pub mod pamsolve;
pub mod rng;
pub mod stats;
pub mod tridiag;

pub use envgen::{PotentialField, PotentialKind, PotentialSpec};
pub use error::{Error, Result};
pub use front::{FrontTrace, GridConfig, InitialCondition, SolutionTrajectory, SolveOptions};
pub use stats::Estimate;
