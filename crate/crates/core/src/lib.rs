//! Robust finite-state-controller synthesis for hidden-model POMDPs.
//!
//! A hidden-model POMDP is a finite family of POMDPs that share states,
//! actions and observations and differ in transitions and rewards. This crate
//! optimizes controllers for the worst member of such a family by alternating
//! robust evaluation (exact enumeration or abstraction refinement over the
//! quotient of the family) with gradient steps on the current worst instance.

pub mod bench;
pub mod clock;
pub mod error;
pub mod eval;
pub mod fsc;
pub mod grad;
pub mod induced;
pub mod io;
pub mod linsolve;
pub mod model;
pub mod optimize;
pub mod sampling;

pub use error::{Error, Result};
