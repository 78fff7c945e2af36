//! Mean-field control of heterogeneous diffusions interacting through a
//! graphon: particle simulation, Picard fixed points, flat-derivative
//! calculus, and Bellman/DPP verification on a discretized label space.

pub mod bellman;
pub mod calculus;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fixedpoint;
pub mod measure_space;
pub mod rng;

pub use error::{Error, Result};
