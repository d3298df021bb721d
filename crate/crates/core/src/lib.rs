//! Variable selection under strong effect heredity.
//!
//! The central idea is hierarchical standardization: standardize only the
//! main effects, build squares and interactions from the standardized
//! mains, select on that design with any selector, and map the estimates
//! back to raw units. The back-transform pushes every selected
//! second-order coefficient into its parent main effects, so the raw-scale
//! model always satisfies strong heredity.

pub mod cli;
pub mod error;
pub mod io;
pub mod metrics;
pub mod selectors;
pub mod simulation;
pub mod standardize;
pub mod terms;

pub use error::{Error, Result};
