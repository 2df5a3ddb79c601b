//! Numerical toolkit for Feller processes with Lévy-type generators:
//! symbols and local characteristics, Orlicz-space norms, exit-time bounds
//! for balls, an Euler-type path simulator, and the regularity diagnostics
//! built on top of it.

pub mod characteristics;
pub mod diagnostics;
pub mod error;
pub mod exit_bounds;
pub mod numeric;
pub mod orlicz;
pub mod parallel;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
