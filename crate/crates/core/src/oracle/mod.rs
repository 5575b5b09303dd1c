//! Exact enumeration over small instances: joint laws, information
//! functionals, policy simplification and brute-force optima.

mod exhaustive;
mod info;
mod joint;
mod verify;

pub use exhaustive::*;
pub use info::*;
pub use joint::*;
pub use verify::*;
